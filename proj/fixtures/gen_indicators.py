#!/usr/bin/env python3
"""Labeled indicator lines and a synthetic label set for balance stats.

indicators.jsonl: 200 lines that each carry known indicators (20 per kind)
plus 50 near-miss lines with none. Expected labels assume validation against
data/kb with no transcript and reference year 2026.

labels.json: per-sample (category, family) pairs for `stats balance`.
"""

import hashlib
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
REFERENCE_YEAR = 2026


def load_kb(name):
    with open(os.path.join(ROOT, "data", "kb", name + ".jsonl")) as f:
        return [json.loads(line) for line in f if line.strip()]


ATTACK = {d["key"] for d in load_kb("attack_techniques")}
CWE = {d["key"] for d in load_kb("cwe_weaknesses")}
FAMILY_HASHES = sorted({t for d in load_kb("family_intel") for t in d["tags"]
                        if len(t) in (32, 40, 64) and all(c in "0123456789abcdef" for c in t)})

V, U, I = "verified", "valid_unverified", "invalid"


def technique_label(tid):
    if tid in ATTACK:
        return V
    if "." in tid and tid.split(".")[0] in ATTACK:
        return V
    return U


def gen_technique(rng):
    pick = rng.random()
    if pick < 0.4:
        tid = rng.choice(sorted(ATTACK))
    elif pick < 0.7:
        parent = rng.choice(sorted(t for t in ATTACK if "." not in t))
        tid = "%s.%03d" % (parent, rng.randint(1, 20))
    else:
        tid = "T%04d" % rng.randint(1700, 1999)
    raw = tid if rng.random() < 0.8 else tid.lower()
    text = rng.choice(["The loader maps to %s during execution.", "Behavior consistent with %s was observed.",
                       "Analysts tagged the routine as %s in the writeup."]) % raw
    return text, [("mitre_technique", raw, raw.upper(), technique_label(tid))]


def gen_cve(rng):
    if rng.random() < 0.7:
        year = rng.randint(1999, REFERENCE_YEAR + 1)
        label = U
    else:
        year = rng.choice([1990, 1998, REFERENCE_YEAR + 2, 2099])
        label = I
    raw = "CVE-%d-%d" % (year, rng.randint(1000, 99999))
    text = rng.choice(["The dropper exploits %s to gain a foothold.", "Patch %s before redeploying hosts.",
                       "Exploit code referencing %s was embedded."]) % raw
    return text, [("cve", raw, raw.upper(), label)]


def gen_cwe(rng):
    if rng.random() < 0.6:
        cid = rng.choice(sorted(CWE))
    else:
        cid = "CWE-%d" % rng.randint(1100, 1400)
    text = rng.choice(["The parser shows %s in its copy loop.", "Root cause is %s according to the audit.",
                       "Static review flagged %s near the entry point."]) % cid
    return text, [("cwe", cid, cid, V if cid in CWE else U)]


def gen_capec(rng):
    raw = "CAPEC-%d" % rng.randint(1, 700)
    text = rng.choice(["The campaign follows %s closely.", "Attack pattern %s describes the lure.",
                       "Mapped to %s by the threat team."]) % raw
    return text, [("capec", raw, raw, U)]


def gen_cvss(rng):
    base = ["AV:" + rng.choice("NALP"), "AC:" + rng.choice("LH"), "PR:" + rng.choice("NLH"),
            "UI:" + rng.choice("NR"), "S:" + rng.choice("UC"), "C:" + rng.choice("HLN"),
            "I:" + rng.choice("HLN"), "A:" + rng.choice("HLN")]
    version = rng.choice(["3.0", "3.1"])
    mode = rng.random()
    label = U
    if mode < 0.55:
        pass
    elif mode < 0.7:
        base[0] = "AV:Q"
        label = I
    elif mode < 0.85:
        del base[rng.randrange(len(base))]
        label = I
    else:
        version = "3.2"
        label = I
    raw = "CVSS:%s/%s" % (version, "/".join(base))
    text = rng.choice(["Severity vector %s was assigned.", "The advisory lists %s for the flaw."]) % raw
    return text, [("cvss_vector", raw, raw.upper(), label)]


def gen_ip(rng):
    mode = rng.random()
    if mode < 0.5:
        octets = [rng.choice([23, 45, 91, 185, 203]), rng.randint(0, 255), rng.randint(0, 255), rng.randint(1, 254)]
        label = U
    elif mode < 0.75:
        octets = rng.choice([[10, rng.randint(0, 255), 1, 5], [192, 168, rng.randint(0, 255), 20],
                             [172, rng.randint(16, 31), 0, 9], [127, 0, 0, 1]])
        label = U
    else:
        octets = [rng.randint(256, 999), rng.randint(0, 255), rng.randint(0, 255), rng.randint(1, 254)]
        rng.shuffle(octets)
        label = I
    raw = ".".join(str(o) for o in octets)
    text = rng.choice(["Beacon traffic went to %s over TCP.", "The config names %s as its panel.",
                       "Outbound sessions reached %s repeatedly."]) % raw
    return text, [("ip_address", raw, raw, label)]


def gen_hash(rng):
    if rng.random() < 0.5 and FAMILY_HASHES:
        h = rng.choice(FAMILY_HASHES)
        label = V
    else:
        n = rng.choice([32, 40, 64])
        h = hashlib.sha256(str(rng.random()).encode()).hexdigest()
        h = (h * 2)[:n]
        label = U
    raw = h.upper() if rng.random() < 0.3 else h
    text = rng.choice(["Second stage hash %s was recovered.", "Sample %s matched the hunt query.",
                       "Payload digest %s appears in the report."]) % raw
    return text, [("file_hash", raw, raw.lower(), label)]


def gen_url(rng):
    host = rng.choice(["update-check.net", "cdn.files-mirror.org", "panel.example.com", "185.10.20.30"])
    path = rng.choice(["/gate.php", "/api/v2/task?id=7", "/d/payload.bin", "/"])
    scheme = rng.choice(["http", "https", "ftp"])
    raw = "%s://%s%s" % (scheme, host, path)
    text = rng.choice(["Stage two downloads from %s today.", "The sample polls %s for commands.",
                       "Config points at %s, then sleeps."]) % raw
    return text, [("url", raw, raw.lower(), U)]


def gen_email(rng):
    raw = "%s@%s" % (rng.choice(["ops", "billing.team", "x_admin", "support+ticket"]),
                     rng.choice(["mailbox.ru", "secure-drop.com", "corp.example.org"]))
    text = rng.choice(["Exfiltration mail goes to %s via SMTP.", "Ransom note lists %s as the contact.",
                       "The stealer sends logs to %s hourly."]) % raw
    return text, [("email", raw, raw.lower(), U)]


def gen_port(rng):
    mode = rng.random()
    if mode < 0.7:
        value = rng.choice([22, 80, 443, 4444, 8080, 1604, 65535, 1])
        label = U
    else:
        value = rng.choice([0, 65536, 70000, 99999])
        label = I
    sep = rng.choice([" ", ":", " #", "="])
    raw = "port%s%d" % (sep, value)
    text = rng.choice(["The backdoor listens on %s for operators.", "Traffic used %s during the session.",
                       "Firewall logs show %s being probed."]) % raw
    return text, [("port", raw, str(value), label)]


GENERATORS = [gen_technique, gen_cve, gen_cwe, gen_capec, gen_cvss, gen_ip, gen_hash, gen_url, gen_email, gen_port]

NEGATIVES = [
    "The T123 build is older than the others.",
    "Tag T12345 is an internal ticket number.",
    "CVE-2021-12 is a truncated identifier.",
    "Version 1.2.3 shipped last week.",
    "Host 10.0.0 is missing an octet.",
    "Address 1.2.3.4.5 is malformed.",
    "The listener binds port8080 without a separator.",
    "Short digest abcdef1234 is not a full hash.",
    "A 33 character string 0123456789abcdef0123456789abcdef0 is not a hash.",
    "Contact admin at corp dot com for help.",
    "The word report appears here 443 times.",
    "Support 22 engineers on call.",
    "CWE79 lacks the hyphen.",
    "CAPEC lookups were skipped.",
    "CVSS scoring was not provided.",
    "The ftp:// scheme alone is not a link.",
    "Use http:/broken/path for nothing.",
    "user@localhost has no domain suffix.",
    "name@host.c1 has a numeric suffix.",
    "ATT&CK coverage was partial this quarter.",
    "The sample sleeps for 3000 milliseconds.",
    "Imported functions number 42 in total.",
    "Entropy reached 7.9 bits per byte.",
    "Section .text is executable.",
    "The mutex name is Global\\\\QWERTY.",
    "Build path C:\\\\dev\\\\proj\\\\release was left in.",
    "Registry key Software\\\\Run holds the value.",
    "PE timestamp reads 2019 in the header.",
    "Strings include the word transport.",
    "The important flag is set.",
    "Process hollowing was not observed.",
    "No network indicators were recovered.",
    "The config blob is XOR encoded with key 0x5A.",
    "Checksum 0xDEADBEEF is a constant.",
    "Found at offset 4096 in the overlay.",
    "Tables list 12 suspicious APIs.",
    "A UUID like 123e4567-e89b-12d3-a456-426614174000 is not a hash.",
    "The T-1055 spelling uses a hyphen.",
    "See section 3 for details.",
    "Thread count peaked at 64.",
    "A dotted version 10.2 is not an address.",
    "User agent Mozilla/5.0 was hardcoded.",
    "Sleep jitter ranges from 5 to 15 percent.",
    "The dropper writes to %TEMP% first.",
    "Port numbers were not recorded.",
    "Indicator extraction found nothing here.",
    "The GUID {A1B2C3D4} identifies the COM class.",
    "Shellcode size is 512 bytes.",
    "Beacon interval is 60 seconds.",
    "Operators reused the same panel theme.",
]


def indicator_lines():
    rng = random.Random(2718)
    lines = []
    for k, gen in enumerate(GENERATORS):
        for _ in range(20):
            text, found = gen(rng)
            lines.append({"text": text, "expected": [
                {"kind": kind, "raw": raw, "normalized": norm, "label": label} for kind, raw, norm, label in found]})
    # Some lines carry two kinds at once.
    for n in range(0, 200, 10):
        a, b = lines[n], lines[(n + 37) % 200]
        joined = a["text"] + " " + b["text"]
        lines[n] = {"text": joined, "expected": a["expected"] + b["expected"]}
    assert len(NEGATIVES) == 50
    lines += [{"text": t, "expected": []} for t in NEGATIVES]
    for n, line in enumerate(lines):
        line["id"] = n + 1
        for e in line["expected"]:
            assert e["raw"] in line["text"]
    return lines


def label_set():
    dist = {
        "ransomware": {"gandcrab": 40, "lockbit": 25, "conti": 15, "stop": 10},
        "stealer": {"agenttesla": 30, "redline": 30, "formbook": 20},
        "rat": {"asyncrat": 12, "njrat": 12, "remcos": 12},
        "loader": {"unknown": 50, "amadey": 7, "smokeloader": 5, "guloader": 3},
        "banker": {"zbot": 18, "emotet": 6},
        "benign": {"benign": 20},
    }
    out = []
    for category, fams in dist.items():
        for family, count in fams.items():
            for i in range(count):
                sha = hashlib.sha256(("%s/%s/%d" % (category, family, i)).encode()).hexdigest()
                out.append({"sha256": sha, "family": family, "category": category})
    return out


def main():
    with open(os.path.join(HERE, "indicators.jsonl"), "w") as f:
        for line in indicator_lines():
            f.write(json.dumps(line) + "\n")
    with open(os.path.join(HERE, "labels.json"), "w") as f:
        json.dump(label_set(), f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
