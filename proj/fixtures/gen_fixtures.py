#!/usr/bin/env python3
"""Writes the fixture PE samples and their companion files.

Outputs (relative to this directory):
  samples/<name>.exe          minimal but well-formed PE32 / PE32+ images
  tools/<sha256>/decompiled.c fixture decompiler output
  tools/<sha256>/disasm.s     fixture disassembler output
  cti/<sha256>.json           vendor labels for the CTI fixture client
  ground_truth.json           locally labeled samples (sha256 -> label)
  manifest.json               per-sample facts, cross-checked with pefile
  ../data/kb/family_intel.jsonl  family documents tagged with sample hashes

Run with --check to verify existing outputs without rewriting them.
"""

import hashlib
import json
import os
import struct
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)

FILE_ALIGN = 0x200
SECT_ALIGN = 0x1000
HEADERS_SIZE = 0x400
TIMESTAMP = 0x5F5E1000


def align(n, a):
    return (n + a - 1) // a * a


def stream(seed, n):
    """Deterministic filler bytes (sha256 in counter mode)."""
    out = bytearray()
    counter = 0
    while len(out) < n:
        out += hashlib.sha256(f"{seed}:{counter}".encode()).digest()
        counter += 1
    return bytes(out[:n])


SAMPLES = [
    {
        "name": "gandcrab",
        "arch": "x86",
        "family": "gandcrab",
        "category": "ransomware",
        "label_path": "cti",
        "vendor_labels": ["Trojan.GandCrab", "Ransom:Win32/GandCrab.A", "W32.GandCrab!gen"],
        "imports": [
            ("KERNEL32.dll", ["CreateFileW", "ReadFile", "WriteFile", "FindFirstFileW", "FindNextFileW",
                              "GetLogicalDrives", "MoveFileExW"]),
            ("ADVAPI32.dll", ["CryptAcquireContextW", "CryptGenKey", "CryptEncrypt", "RegSetValueExW"]),
        ],
        "strings": ["KRAB-DECRYPT.txt", "GANDCRAB KEY", "http://gandcrabmfe6mnef.onion/decrypt",
                    "Software\\Microsoft\\Windows\\CurrentVersion\\Run", "All your files are encrypted"],
        "functions": [
            ("main", ["enumerate_drives", "persist_run_key"]),
            ("enumerate_drives", ["GetLogicalDrives", "encrypt_tree"]),
            ("encrypt_tree", ["FindFirstFileW", "FindNextFileW", "encrypt_file"]),
            ("encrypt_file", ["CreateFileW", "ReadFile", "CryptEncrypt", "WriteFile", "MoveFileExW"]),
            ("init_crypto", ["CryptAcquireContextW", "CryptGenKey"]),
            ("persist_run_key", ["RegSetValueExW"]),
        ],
        "pad": 0x6000,
    },
    {
        "name": "agenttesla",
        "arch": "x86",
        "family": "agenttesla",
        "category": "stealer",
        "label_path": "cti",
        "vendor_labels": ["Trojan.AgentTesla", "AgentTesla!ml", "Spyware.AgentTesla.MSIL"],
        "imports": [
            ("user32.dll", ["GetAsyncKeyState", "SetWindowsHookExW", "GetForegroundWindow"]),
            ("wininet.dll", ["InternetOpenA", "InternetConnectA", "HttpSendRequestA"]),
            ("advapi32.dll", ["RegOpenKeyExA", "RegQueryValueExA"]),
            ("crypt32.dll", ["CryptUnprotectData"]),
        ],
        "strings": ["smtp.mailhost-delivery.com", "exfil@mailhost-delivery.com", "Login Data",
                    "\\Google\\Chrome\\User Data\\Default\\Login Data", "http://185.222.58.91:8080/gate.php"],
        "functions": [
            ("main", ["install_hook", "harvest_credentials", "send_report"]),
            ("install_hook", ["SetWindowsHookExW", "GetForegroundWindow"]),
            ("keyboard_proc", ["GetAsyncKeyState"]),
            ("harvest_credentials", ["RegOpenKeyExA", "RegQueryValueExA", "CryptUnprotectData"]),
            ("send_report", ["InternetOpenA", "InternetConnectA", "HttpSendRequestA"]),
        ],
        "pad": 0x9000,
    },
    {
        "name": "asyncrat",
        "arch": "x64",
        "family": "asyncrat",
        "category": "rat",
        "label_path": "cti",
        "vendor_labels": ["Backdoor.AsyncRAT", "AsyncRAT!MTB", "MSIL/AsyncRAT.A"],
        "imports": [
            ("ws2_32.dll", ["WSAStartup", "connect", "send", "recv"]),
            ("advapi32.dll", ["RegCreateKeyExW", "RegSetValueExW"]),
            ("kernel32.dll", ["CreateMutexW", "IsDebuggerPresent", "Sleep"]),
        ],
        "strings": ["AsyncMutex_6SI8OkPnk", "Software\\Microsoft\\Windows\\CurrentVersion\\Run",
                    "45.137.22.163", "Pastebin fallback disabled"],
        "functions": [
            ("main", ["anti_analysis", "install_persistence", "c2_loop"]),
            ("anti_analysis", ["IsDebuggerPresent", "CreateMutexW"]),
            ("install_persistence", ["RegCreateKeyExW", "RegSetValueExW"]),
            ("c2_loop", ["WSAStartup", "connect", "send", "recv", "Sleep"]),
        ],
        "pad": 0xC000,
    },
    {
        "name": "zbot",
        "arch": "x86",
        "family": "zbot",
        "category": "banker",
        "label_path": "ground_truth",
        "imports": [
            ("kernel32.dll", ["OpenProcess", "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread"]),
            ("wininet.dll", ["InternetOpenA", "HttpSendRequestA", "InternetReadFile"]),
            ("advapi32.dll", ["RegSetValueExA"]),
        ],
        "strings": ["http://bank-update-secure.com/config.bin", "explorer.exe", "local.ds", "user.ds"],
        "functions": [
            ("main", ["inject_explorer", "fetch_config"]),
            ("inject_explorer", ["OpenProcess", "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread"]),
            ("fetch_config", ["InternetOpenA", "HttpSendRequestA", "InternetReadFile"]),
            ("persist", ["RegSetValueExA"]),
        ],
        "pad": 0x5000,
    },
    {
        "name": "babadeda",
        "arch": "x86",
        "family": "babadeda",
        "category": "dropper",
        "label_path": "ground_truth",
        "imports": [
            ("urlmon.dll", ["URLDownloadToFileA"]),
            ("shell32.dll", ["ShellExecuteA"]),
            ("kernel32.dll", ["WinExec", "CreateFileA", "WriteFile", "GetTempPathA"]),
            ("MSCOMCTL.OCX", [6, 11]),
        ],
        "strings": ["http://cdn-discord-files.net/payload/stage2.exe", "%TEMP%\\stage2.exe", "cmd.exe /c start"],
        "functions": [
            ("main", ["drop_payload", "launch_payload"]),
            ("drop_payload", ["GetTempPathA", "URLDownloadToFileA", "CreateFileA", "WriteFile"]),
            ("launch_payload", ["ShellExecuteA", "WinExec"]),
        ],
        "pad": 0x3000,
    },
    {
        "name": "coinminer",
        "arch": "x64",
        "family": "coinminer",
        "category": "miner",
        "label_path": "ground_truth",
        "imports": [
            ("kernel32.dll", ["CreateProcessA", "GetSystemInfo", "SetPriorityClass"]),
            ("ws2_32.dll", ["WSAStartup", "connect", "send", "recv"]),
        ],
        "strings": ["stratum+tcp://pool.minexmr.com:4444", "xmrig --donate-level 1", "--cpu-max-threads-hint 75"],
        "functions": [
            ("main", ["probe_host", "spawn_worker", "pool_session"]),
            ("probe_host", ["GetSystemInfo"]),
            ("spawn_worker", ["CreateProcessA", "SetPriorityClass"]),
            ("pool_session", ["WSAStartup", "connect", "send", "recv"]),
        ],
        "pad": 0x1A000,
    },
    {
        "name": "killmbr",
        "arch": "x86",
        "family": "killmbr",
        "category": "wiper",
        "label_path": "ground_truth",
        "imports": [
            ("kernel32.dll", ["CreateFileA", "WriteFile", "DeviceIoControl"]),
            ("advapi32.dll", ["OpenProcessToken", "AdjustTokenPrivileges"]),
            ("user32.dll", ["ExitWindowsEx"]),
        ],
        "strings": ["\\\\.\\PhysicalDrive0", "SeShutdownPrivilege", "Your disk is gone"],
        "functions": [
            ("main", ["acquire_privilege", "overwrite_mbr", "force_reboot"]),
            ("acquire_privilege", ["OpenProcessToken", "AdjustTokenPrivileges"]),
            ("overwrite_mbr", ["CreateFileA", "DeviceIoControl", "WriteFile"]),
            ("force_reboot", ["ExitWindowsEx"]),
        ],
        "pad": 0x1000,
    },
    {
        "name": "vipkeylogger",
        "arch": "x86",
        "family": "vip",
        "category": "keylogger",
        "label_path": "ground_truth",
        "imports": [
            ("user32.dll", ["SetWindowsHookExA", "GetAsyncKeyState", "GetKeyState", "GetForegroundWindow",
                            "GetWindowTextA"]),
            ("kernel32.dll", ["CreateFileA", "WriteFile"]),
            ("wininet.dll", ["InternetOpenA", "InternetConnectA"]),
        ],
        "strings": ["keylog.dat", "smtp.vip-logs-mail.com", "[ENTER]", "[BACKSPACE]", "ftp://198.51.100.23/upload"],
        "functions": [
            ("main", ["install_hook", "flush_log"]),
            ("install_hook", ["SetWindowsHookExA"]),
            ("hook_proc", ["GetAsyncKeyState", "GetKeyState", "GetForegroundWindow", "GetWindowTextA",
                           "append_log"]),
            ("append_log", ["CreateFileA", "WriteFile"]),
            ("flush_log", ["InternetOpenA", "InternetConnectA"]),
        ],
        "pad": 0x2000,
    },
    {
        "name": "meterpreter",
        "arch": "x64",
        "family": "meterpreter",
        "category": "backdoor",
        "label_path": "ground_truth",
        "imports": [
            ("kernel32.dll", ["VirtualAlloc", "VirtualProtect", "CreateThread", "LoadLibraryA", "GetProcAddress"]),
            ("WS2_32.dll", [115, 23, 4, 16]),
        ],
        "strings": ["metsrv.dll", "ReflectiveLoader", "192.168.56.10", "LHOST=203.0.113.45 LPORT=4444"],
        "functions": [
            ("main", ["stage_connect", "reflective_load"]),
            ("stage_connect", ["LoadLibraryA", "GetProcAddress"]),
            ("reflective_load", ["VirtualAlloc", "VirtualProtect", "CreateThread"]),
        ],
        "pad": 0x4000,
    },
    {
        "name": "amadey",
        "arch": "x86",
        "family": "unknown",
        "category": "unknown",
        "label_path": "unknown",
        "vendor_labels": ["Trojan.Generic", "Malware.Win32.Generic", "Gen:Variant.Generic"],
        "imports": [
            ("wininet.dll", ["InternetOpenUrlA", "InternetReadFile"]),
            ("kernel32.dll", ["CreateProcessA", "GetComputerNameA"]),
            ("advapi32.dll", ["RegSetValueExA"]),
            ("shell32.dll", ["ShellExecuteA"]),
        ],
        "strings": ["http://77.91.124.20/amdy/index.php", "schtasks /Create /SC MINUTE /TN", "cred.dll"],
        "functions": [
            ("main", ["beacon", "run_task"]),
            ("beacon", ["GetComputerNameA", "InternetOpenUrlA", "InternetReadFile"]),
            ("run_task", ["CreateProcessA", "ShellExecuteA", "RegSetValueExA"]),
        ],
        "pad": 0x2800,
    },
]


def build_imports(imports, rva_base, is64):
    """Returns (blob, import_dir_size, iat_rva, iat_size) laid out at rva_base."""
    ts = 8 if is64 else 4
    ordinal_flag = (1 << 63) if is64 else (1 << 31)
    n = len(imports)
    desc_size = (n + 1) * 20
    off = desc_size
    layout = []
    for lib, funcs in imports:
        ilt = off
        off += (len(funcs) + 1) * ts
        layout.append([lib, funcs, ilt, None, []])
    iat_start = off
    for entry in layout:
        entry[3] = off
        off += (len(entry[1]) + 1) * ts
    iat_end = off
    for entry in layout:
        for fn in entry[1]:
            if isinstance(fn, int):
                entry[4].append(None)
                continue
            off = align(off, 2)
            entry[4].append(off)
            off += 2 + len(fn) + 1
    lib_name_at = []
    for entry in layout:
        lib_name_at.append(off)
        off += len(entry[0]) + 1
    blob = bytearray(align(off, 16))
    for i, (lib, funcs, ilt, iat, names) in enumerate(layout):
        struct.pack_into("<IIIII", blob, i * 20, rva_base + ilt, 0, 0, rva_base + lib_name_at[i], rva_base + iat)
        for j, fn in enumerate(funcs):
            value = (ordinal_flag | fn) if isinstance(fn, int) else rva_base + names[j]
            fmt = "<Q" if is64 else "<I"
            struct.pack_into(fmt, blob, ilt + j * ts, value)
            struct.pack_into(fmt, blob, iat + j * ts, value)
            if not isinstance(fn, int):
                struct.pack_into("<H", blob, names[j], j)
                blob[names[j] + 2:names[j] + 2 + len(fn)] = fn.encode()
        blob[lib_name_at[i]:lib_name_at[i] + len(lib)] = lib.encode()
    return bytes(blob), desc_size, rva_base + iat_start, iat_end - iat_start


def build_pe(sample):
    is64 = sample["arch"] == "x64"
    seed = sample["name"]
    text_raw = align(0x800 + sample["pad"], FILE_ALIGN)
    text = bytearray(stream(seed + ":text", text_raw))
    # A recognizable prologue at the entry point.
    text[0:8] = b"\x55\x89\xe5\x83\xec\x10\x90\x90"

    text_rva = SECT_ALIGN
    rdata_rva = text_rva + align(text_raw, SECT_ALIGN)
    imports_blob, import_size, iat_rva, iat_size = build_imports(sample["imports"], rdata_rva, is64)
    rdata = imports_blob
    rdata_raw = align(len(rdata), FILE_ALIGN)
    rdata += bytes(rdata_raw - len(rdata))

    data_rva = rdata_rva + align(rdata_raw, SECT_ALIGN)
    data = bytearray()
    for s in sample["strings"]:
        data += s.encode("ascii") + b"\x00"
    data += "\x00".join(["Windows", "Microsoft Corporation"]).encode("utf-16-le") + b"\x00\x00"
    data_raw = align(len(data), FILE_ALIGN)
    data += bytes(data_raw - len(data))
    size_of_image = data_rva + align(data_raw, SECT_ALIGN)

    sections = [
        (b".text", text_raw, text_rva, text_raw, HEADERS_SIZE, 0x60000020),
        (b".rdata", len(rdata), rdata_rva, rdata_raw, HEADERS_SIZE + text_raw, 0x40000040),
        (b".data", len(sample["strings"]) * 16, data_rva, data_raw, HEADERS_SIZE + text_raw + rdata_raw, 0xC0000040),
    ]

    e_lfanew = 0x80
    dos = bytearray(e_lfanew)
    dos[0:2] = b"MZ"
    struct.pack_into("<H", dos, 2, 0x90)
    struct.pack_into("<I", dos, 0x3C, e_lfanew)
    stub = b"This program cannot be run in DOS mode.\r\r\n$"
    dos[0x4E:0x4E + len(stub)] = stub

    opt_size = 240 if is64 else 224
    machine = 0x8664 if is64 else 0x14C
    characteristics = 0x0022 if is64 else 0x0102
    coff = struct.pack("<HHIIIHH", machine, len(sections), TIMESTAMP, 0, 0, opt_size, characteristics)

    dirs = [(0, 0)] * 16
    dirs[1] = (rdata_rva, import_size)
    dirs[12] = (iat_rva, iat_size)
    code_size = text_raw
    init_size = rdata_raw + data_raw
    if is64:
        opt = struct.pack("<HBBIIIII", 0x20B, 14, 28, code_size, init_size, 0, text_rva, text_rva)
        opt += struct.pack("<QII", 0x140000000, SECT_ALIGN, FILE_ALIGN)
        opt += struct.pack("<HHHHHHI", 6, 0, 0, 0, 6, 0, 0)
        opt += struct.pack("<IIIHH", size_of_image, HEADERS_SIZE, 0, 2, 0x8160)
        opt += struct.pack("<QQQQ", 0x100000, 0x1000, 0x100000, 0x1000)
        opt += struct.pack("<II", 0, 16)
    else:
        opt = struct.pack("<HBBIIIIII", 0x10B, 14, 28, code_size, init_size, 0, text_rva, text_rva, rdata_rva)
        opt += struct.pack("<III", 0x400000, SECT_ALIGN, FILE_ALIGN)
        opt += struct.pack("<HHHHHHI", 6, 0, 0, 0, 6, 0, 0)
        opt += struct.pack("<IIIHH", size_of_image, HEADERS_SIZE, 0, 2, 0x8140)
        opt += struct.pack("<IIII", 0x100000, 0x1000, 0x100000, 0x1000)
        opt += struct.pack("<II", 0, 16)
    for rva, size in dirs:
        opt += struct.pack("<II", rva, size)
    assert len(opt) == opt_size, (len(opt), opt_size)

    table = bytearray()
    for name, vsize, vaddr, rsize, rptr, chars in sections:
        table += name.ljust(8, b"\x00") + struct.pack("<IIIIIIHHI", vsize, vaddr, rsize, rptr, 0, 0, 0, 0, chars)

    headers = bytes(dos) + b"PE\x00\x00" + coff + opt + bytes(table)
    assert len(headers) <= HEADERS_SIZE
    headers += bytes(HEADERS_SIZE - len(headers))
    return headers + bytes(text) + bytes(rdata) + bytes(data)


def imphash_string(imports):
    parts = []
    for lib, funcs in imports:
        name = lib.lower()
        for ext in (".dll", ".sys", ".ocx"):
            if name.endswith(ext):
                name = name[: -len(ext)]
                break
        for fn in funcs:
            parts.append(f"{name}.ord{fn}" if isinstance(fn, int) else f"{name}.{fn.lower()}")
    return ",".join(parts)


def render_c(sample):
    lines = [f"// {sample['name']}: decompiler fixture output", "#include <windows.h>", ""]
    for name, calls in sample["functions"]:
        lines.append(f"int32_t {name}(void *arg)")
        lines.append("{")
        lines.append("    int32_t v1 = 0;")
        for i, callee in enumerate(calls):
            if i % 2 == 0:
                lines.append(f"    if ({callee}(arg) == 0) {{")
                lines.append("        return -1;")
                lines.append("    }")
            else:
                lines.append(f"    v1 = {callee}(arg);")
        lines.append("    return v1;")
        lines.append("}")
        lines.append("")
    return "\n".join(lines)


def render_asm(sample):
    is64 = sample["arch"] == "x64"
    bp, sp, ax = ("rbp", "rsp", "rax") if is64 else ("ebp", "esp", "eax")
    internal = {name for name, _ in sample["functions"]}
    lines = [f"; {sample['name']}: disassembler fixture output", ""]
    for name, calls in sample["functions"]:
        lines.append(f"{name}:")
        lines.append(f"    push {bp}")
        lines.append(f"    mov {bp}, {sp}")
        for i, callee in enumerate(calls):
            target = callee if callee in internal else f"qword [{callee}]" if is64 else f"dword [{callee}]"
            lines.append(f"    call {target}")
            if i % 2 == 0:
                lines.append(f"    test {ax}, {ax}")
                lines.append(f"    je .{name}_fail")
                lines.append(f".{name}_next{i}:")
        lines.append(f"    jmp .{name}_end")
        lines.append(f".{name}_fail:")
        lines.append(f"    mov {ax}, -1")
        lines.append(f".{name}_end:")
        lines.append(f"    pop {bp}")
        lines.append("    ret")
        lines.append("")
    return "\n".join(lines)


FAMILY_DOCS = {
    "gandcrab": ("GandCrab", "ransomware", "Ransomware-as-a-service family that encrypts local and network "
                 "files, appends a random extension and drops KRAB-DECRYPT ransom notes. Uses the Windows "
                 "CryptoAPI for key generation and a Run key for persistence."),
    "agenttesla": ("Agent Tesla", "stealer", "Information stealer and keylogger that harvests browser and mail "
                   "client credentials, captures keystrokes through a low-level keyboard hook and exfiltrates "
                   "data over SMTP, FTP or HTTP."),
    "asyncrat": ("AsyncRAT", "rat", "Open-source remote access trojan with encrypted TCP command and control, "
                 "mutex-based single instance checks, anti-analysis routines and Run key persistence."),
    "zbot": ("Zeus / Zbot", "banker", "Banking trojan that injects into browser processes to intercept web "
             "sessions, downloads an encrypted configuration and stores stolen data in local files."),
    "babadeda": ("Babadeda", "dropper", "Crypter and dropper that downloads a second-stage payload into the "
                 "temporary directory and launches it through ShellExecute or WinExec."),
    "coinminer": ("CoinMiner", "miner", "Cryptocurrency miner that spawns an XMRig worker, raises its priority "
                  "and connects to a Stratum mining pool."),
    "killmbr": ("KillMBR", "wiper", "Destructive wiper that enables shutdown privileges, overwrites the master "
                "boot record through raw disk access and forces a reboot."),
    "vip": ("VIP Keylogger", "keylogger", "Keylogger that records keystrokes with the window title of the "
            "foreground window and periodically uploads the log over FTP or SMTP."),
    "meterpreter": ("Meterpreter", "backdoor", "Staged payload that resolves socket APIs, reflectively loads "
                    "its server DLL into memory and gives the operator an interactive session."),
}

EXTRA_FAMILY_DOCS = [
    ("winwebsec", "Winwebsec", "rogueware", "Fake antivirus that reports invented infections and demands payment "
     "for a license to remove them."),
    ("amadey", "Amadey", "loader", "Loader bot that beacons host details to its panel over HTTP and runs tasks "
     "that download and execute further payloads."),
    ("mediyes", "Mediyes", "adware", "Adware that injects advertising into browser sessions through a signed "
     "driver component."),
    ("zeroaccess", "ZeroAccess", "botnet", "Peer-to-peer botnet used for click fraud and mining, with a rootkit "
     "component in some variants."),
    ("casdet", "Casdet", "trojan", "Generic trojan family observed delivering other payloads."),
    ("cobalt", "Cobalt Strike", "hacktool", "Commercial adversary simulation framework whose Beacon payload is "
     "widely abused for post-exploitation."),
    ("mofksys", "Mofksys", "worm", "Worm that spreads through removable drives and network shares."),
    ("neshta", "Neshta", "virus", "File infector that prepends itself to executables."),
    ("kimsuky", "Kimsuky", "spyware", "Espionage tooling attributed to a state-linked group, focused on "
     "document and credential theft."),
    ("nemesis", "Nemesis", "rootkit", "Bootkit that persists below the operating system and hides payload "
     "components."),
    ("juicypotato", "JuicyPotato", "exploit", "Local privilege escalation tool abusing COM and token "
     "impersonation."),
]


def write(path, content, mode="w"):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": "\n"})) as f:
        f.write(content)


def main():
    check = "--check" in sys.argv
    manifest = []
    ground_truth = {}
    family_hashes = {}
    for sample in SAMPLES:
        pe = build_pe(sample)
        sha = hashlib.sha256(pe).hexdigest()
        md5 = hashlib.md5(pe).hexdigest()
        imp = imphash_string(sample["imports"])
        entry = {
            "name": sample["name"],
            "file": f"samples/{sample['name']}.exe",
            "sha256": sha,
            "md5": md5,
            "size_bytes": len(pe),
            "architecture": "x86_64" if sample["arch"] == "x64" else "x86",
            "family": sample["family"],
            "category": sample["category"],
            "label_path": sample["label_path"],
            "imports": [{"library": lib, "functions": [f if isinstance(f, str) else f"#{f}" for f in funcs]}
                        for lib, funcs in sample["imports"]],
            "imphash_input": imp,
            "imphash": hashlib.md5(imp.encode()).hexdigest(),
        }
        manifest.append(entry)
        if check:
            with open(os.path.join(HERE, entry["file"]), "rb") as f:
                assert f.read() == pe, f"{entry['file']} differs from generator output"
            continue
        write(os.path.join(HERE, entry["file"]), pe, "wb")
        write(os.path.join(HERE, "tools", sha, "decompiled.c"), render_c(sample))
        write(os.path.join(HERE, "tools", sha, "disasm.s"), render_asm(sample))
        if "vendor_labels" in sample:
            write(os.path.join(HERE, "cti", f"{sha}.json"),
                  json.dumps({"sha256": sha, "vendor_labels": sample["vendor_labels"]}, indent=2) + "\n")
        if sample["label_path"] == "ground_truth":
            ground_truth[sha] = {"family": sample["family"], "category": sample["category"],
                                 "imphash": entry["imphash"]}
        family_hashes.setdefault(sample["family"], []).extend([sha, md5])

    if check:
        verify_with_pefile(manifest)
        print("fixtures match generator output")
        return

    write(os.path.join(HERE, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    write(os.path.join(HERE, "ground_truth.json"), json.dumps(ground_truth, indent=2, sort_keys=True) + "\n")

    docs = []
    for key, (title, category, body) in FAMILY_DOCS.items():
        tags = [f"category:{category}"] + family_hashes.get(key, [])
        docs.append({"doc_id": f"family-{key}", "collection": "family_intel", "key": key, "title": title,
                     "body": body, "tags": tags})
    for key, title, category, body in EXTRA_FAMILY_DOCS:
        docs.append({"doc_id": f"family-{key}", "collection": "family_intel", "key": key, "title": title,
                     "body": body, "tags": [f"category:{category}"]})
    write(os.path.join(ROOT, "data", "kb", "family_intel.jsonl"), "".join(json.dumps(d) + "\n" for d in docs))
    verify_with_pefile(manifest)


def verify_with_pefile(manifest):
    try:
        import pefile
    except ImportError:
        print("pefile not installed; skipped independent verification")
        return
    from pefile import ordlookup

    for entry in manifest:
        pe = pefile.PE(os.path.join(HERE, entry["file"]))
        # pefile names ordinals it has a table for (ws2_32, oleaut32); the
        # project hashes every ordinal as ordN, so map those before comparing.
        mapped = []
        for imp in entry["imports"]:
            funcs = []
            for fn in imp["functions"]:
                if fn.startswith("#"):
                    name = ordlookup.ordLookup(imp["library"].lower().encode(), int(fn[1:]), make_name=True)
                    funcs.append(name.decode() if isinstance(name, bytes) else name)
                else:
                    funcs.append(fn)
            mapped.append((imp["library"], funcs))
        pefile_view = hashlib.md5(imphash_string(mapped).encode()).hexdigest()
        assert pe.get_imphash() == pefile_view, (entry["name"], pe.get_imphash(), pefile_view)
        libs = [d.dll.decode() for d in pe.DIRECTORY_ENTRY_IMPORT]
        assert libs == [i["library"] for i in entry["imports"]], entry["name"]
    print(f"pefile agrees on {len(manifest)} samples")


if __name__ == "__main__":
    main()
