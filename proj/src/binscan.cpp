#include "triage/binscan.hpp"

#include "triage/digest.hpp"
#include "triage/error.hpp"
#include "triage/text.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

namespace triage::binscan {
namespace {

constexpr std::size_t kDosHeaderSize = 0x40;
constexpr std::size_t kCoffHeaderSize = 20;
constexpr std::size_t kSectionHeaderSize = 40;
constexpr std::size_t kImportDescriptorSize = 20;
constexpr std::uint16_t kMachineI386 = 0x014c;
constexpr std::uint16_t kMachineAmd64 = 0x8664;
constexpr std::uint16_t kMagicPe32 = 0x10b;
constexpr std::uint16_t kMagicPe32Plus = 0x20b;
constexpr std::size_t kMaxSections = 96;
constexpr std::size_t kMaxDescriptors = 4096;
constexpr std::size_t kMaxThunks = 65536;
constexpr std::size_t kMaxNameLength = 512;
constexpr std::size_t kMaxStrings = 20000;

[[noreturn]] void malformed(const std::string& what) {
    throw Error(ErrorCode::MalformedHeader, what);
}

class Reader {
public:
    explicit Reader(Bytes bytes) : bytes_(bytes) {}

    [[nodiscard]] bool fits(std::uint64_t offset, std::uint64_t len) const noexcept {
        return offset <= bytes_.size() && len <= bytes_.size() - offset;
    }

    template <typename T>
    T read(std::uint64_t offset, const char* what) const {
        if (!fits(offset, sizeof(T))) malformed(std::string(what) + " lies outside the file");
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(static_cast<T>(bytes_[offset + i]) << (8 * i));
        }
        return value;
    }

    std::string c_string(std::uint64_t offset, const char* what) const {
        if (offset >= bytes_.size()) malformed(std::string(what) + " lies outside the file");
        std::string out;
        for (std::uint64_t i = offset; i < bytes_.size() && out.size() < kMaxNameLength; ++i) {
            auto c = static_cast<char>(bytes_[i]);
            if (c == '\0') return out;
            out.push_back(c);
        }
        if (out.size() >= kMaxNameLength) return out;
        malformed(std::string(what) + " is not terminated");
    }

    [[nodiscard]] std::size_t size() const noexcept { return bytes_.size(); }
    [[nodiscard]] Bytes bytes() const noexcept { return bytes_; }

private:
    Bytes bytes_;
};

struct RawSection {
    std::uint32_t virtual_size;
    std::uint32_t virtual_address;
    std::uint32_t raw_size;
    std::uint32_t raw_pointer;
};

std::optional<std::uint64_t> rva_to_offset(std::uint64_t rva, const std::vector<RawSection>& sections,
                                           std::uint64_t header_size, std::size_t file_size) {
    for (const auto& s : sections) {
        std::uint64_t span = std::max(s.virtual_size, s.raw_size);
        if (rva >= s.virtual_address && rva < s.virtual_address + span) {
            std::uint64_t delta = rva - s.virtual_address;
            if (delta >= s.raw_size) return std::nullopt;  // zero-filled tail, not in file
            std::uint64_t off = s.raw_pointer + delta;
            if (off >= file_size) return std::nullopt;
            return off;
        }
    }
    if (rva < header_size && rva < file_size) return rva;
    return std::nullopt;
}

std::string section_name(const Reader& r, std::uint64_t offset) {
    std::string name;
    for (std::size_t i = 0; i < 8; ++i) {
        auto c = static_cast<char>(r.bytes()[offset + i]);
        if (c == '\0') break;
        name.push_back((c >= 0x20 && c < 0x7f) ? c : '?');
    }
    return name;
}

bool printable(std::uint8_t b) noexcept { return (b >= 0x20 && b < 0x7f) || b == '\t'; }

}  // namespace

std::string_view to_string(FileType t) noexcept {
    switch (t) {
    case FileType::PeExecutable: return "pe_executable";
    case FileType::Elf: return "elf";
    case FileType::Unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(Architecture a) noexcept {
    switch (a) {
    case Architecture::X86: return "x86";
    case Architecture::X86_64: return "x86_64";
    case Architecture::Unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(SizeClass c) noexcept {
    switch (c) {
    case SizeClass::Small: return "small";
    case SizeClass::Medium: return "medium";
    case SizeClass::Large: return "large";
    case SizeClass::Oversize: return "oversize";
    }
    return "oversize";
}

FileType detect_file_type(Bytes bytes) noexcept {
    if (bytes.size() >= 2 && bytes[0] == 0x4D && bytes[1] == 0x5A) return FileType::PeExecutable;
    if (bytes.size() >= 4 && bytes[0] == 0x7F && bytes[1] == 'E' && bytes[2] == 'L' && bytes[3] == 'F') {
        return FileType::Elf;
    }
    return FileType::Unknown;
}

double byte_entropy(Bytes bytes) {
    if (bytes.empty()) throw Error(ErrorCode::EmptyInput, "entropy of an empty buffer");
    std::array<std::uint64_t, 256> histogram{};
    for (auto b : bytes) ++histogram[b];
    const double n = static_cast<double>(bytes.size());
    double h = 0.0;
    for (auto count : histogram) {
        if (count == 0) continue;
        double p = static_cast<double>(count) / n;
        h -= p * std::log2(p);
    }
    return h <= 0.0 ? 0.0 : std::min(h, 8.0);
}

SizeClass size_class(std::uint64_t size_bytes) noexcept {
    if (size_bytes <= kSmallLimit) return SizeClass::Small;
    if (size_bytes <= kMediumLimit) return SizeClass::Medium;
    if (size_bytes <= kLargeLimit) return SizeClass::Large;
    return SizeClass::Oversize;
}

std::vector<std::string> extract_strings(Bytes bytes, std::size_t min_run) {
    std::vector<std::string> out;
    std::string run;
    auto flush = [&](std::string& r) {
        if (r.size() >= min_run && out.size() < kMaxStrings) out.push_back(r);
        r.clear();
    };
    for (auto b : bytes) {
        if (printable(b)) {
            run.push_back(static_cast<char>(b));
        } else {
            flush(run);
        }
    }
    flush(run);

    // UTF-16LE: printable low byte followed by a zero high byte.
    for (std::size_t parity = 0; parity < 2; ++parity) {
        std::string wide;
        for (std::size_t i = parity; i + 1 < bytes.size(); i += 2) {
            if (printable(bytes[i]) && bytes[i + 1] == 0) {
                wide.push_back(static_cast<char>(bytes[i]));
            } else {
                flush(wide);
            }
        }
        flush(wide);
    }
    return out;
}

std::string imphash_input(std::span<const ImportEntry> imports) {
    std::vector<std::string> parts;
    for (const auto& entry : imports) {
        std::string lib = text::lower(entry.library);
        for (std::string_view ext : {".dll", ".sys", ".ocx"}) {
            if (lib.size() > ext.size() && lib.ends_with(ext)) {
                lib.resize(lib.size() - ext.size());
                break;
            }
        }
        for (const auto& fn : entry.functions) parts.push_back(lib + "." + text::lower(fn));
    }
    return text::join(parts, ",");
}

std::string compute_imphash(std::span<const ImportEntry> imports) {
    std::string input = imphash_input(imports);
    if (input.empty()) throw Error(ErrorCode::EmptyImports, "no imported functions");
    return digest::md5_hex(input);
}

PeMetadata parse_pe(Bytes bytes) {
    if (detect_file_type(bytes) != FileType::PeExecutable) malformed("missing MZ signature");
    Reader r(bytes);
    if (bytes.size() < kDosHeaderSize) malformed("DOS header truncated");

    const std::uint64_t nt = r.read<std::uint32_t>(0x3C, "e_lfanew");
    if (!r.fits(nt, 4 + kCoffHeaderSize)) malformed("NT headers truncated");
    if (r.read<std::uint32_t>(nt, "PE signature") != 0x00004550u) malformed("missing PE signature");

    const std::uint64_t coff = nt + 4;
    const auto machine = r.read<std::uint16_t>(coff, "machine");
    const std::size_t section_count = r.read<std::uint16_t>(coff + 2, "section count");
    const std::size_t optional_size = r.read<std::uint16_t>(coff + 16, "optional header size");
    const std::uint64_t opt = coff + kCoffHeaderSize;
    if (section_count > kMaxSections) malformed("section count exceeds loader limit");
    if (optional_size < 2 || !r.fits(opt, optional_size)) malformed("optional header truncated");

    const auto magic = r.read<std::uint16_t>(opt, "optional header magic");
    if (magic != kMagicPe32 && magic != kMagicPe32Plus) malformed("unknown optional header magic");
    const bool is64 = magic == kMagicPe32Plus;
    const std::size_t rva_count_at = is64 ? 108 : 92;
    const std::size_t dirs_at = is64 ? 112 : 96;
    if (optional_size < dirs_at) malformed("optional header too small for data directories");

    PeMetadata pe;
    pe.size_bytes = bytes.size();
    pe.architecture = machine == kMachineI386    ? Architecture::X86
                      : machine == kMachineAmd64 ? Architecture::X86_64
                                                 : Architecture::Unknown;
    pe.entry_point = r.read<std::uint32_t>(opt + 16, "entry point");
    const std::uint64_t header_size = r.read<std::uint32_t>(opt + 60, "size of headers");
    const std::size_t rva_count = r.read<std::uint32_t>(opt + rva_count_at, "directory count");
    if (dirs_at + std::min<std::size_t>(rva_count, 16) * 8 > optional_size) {
        malformed("data directories overrun the optional header");
    }

    const std::uint64_t table = opt + optional_size;
    if (!r.fits(table, section_count * kSectionHeaderSize)) malformed("section table truncated");
    std::vector<RawSection> raw_sections;
    for (std::size_t i = 0; i < section_count; ++i) {
        const std::uint64_t at = table + i * kSectionHeaderSize;
        RawSection s{r.read<std::uint32_t>(at + 8, "virtual size"),
                     r.read<std::uint32_t>(at + 12, "virtual address"),
                     r.read<std::uint32_t>(at + 16, "raw size"),
                     r.read<std::uint32_t>(at + 20, "raw pointer")};
        // Raw data past EOF is common in damaged samples; clamp instead of rejecting.
        std::uint64_t available = s.raw_pointer < bytes.size() ? bytes.size() - s.raw_pointer : 0;
        std::uint64_t raw_size = std::min<std::uint64_t>(s.raw_size, available);
        Section out{section_name(r, at), raw_size, 0.0};
        if (raw_size > 0) out.entropy = byte_entropy(bytes.subspan(s.raw_pointer, raw_size));
        s.raw_size = static_cast<std::uint32_t>(raw_size);
        raw_sections.push_back(s);
        pe.sections.push_back(std::move(out));
    }

    if (rva_count > 1) {
        const auto import_rva = r.read<std::uint32_t>(opt + dirs_at + 8, "import directory");
        const auto import_size = r.read<std::uint32_t>(opt + dirs_at + 12, "import directory size");
        if (import_rva != 0 && import_size != 0) {
            auto desc = rva_to_offset(import_rva, raw_sections, header_size, bytes.size());
            if (!desc) malformed("import directory is not backed by file data");
            const std::size_t thunk_size = is64 ? 8 : 4;
            for (std::size_t d = 0; d < kMaxDescriptors; ++d) {
                const std::uint64_t at = *desc + d * kImportDescriptorSize;
                const auto original_thunk = r.read<std::uint32_t>(at, "import descriptor");
                const auto name_rva = r.read<std::uint32_t>(at + 12, "import descriptor");
                const auto first_thunk = r.read<std::uint32_t>(at + 16, "import descriptor");
                if (original_thunk == 0 && name_rva == 0 && first_thunk == 0) break;

                auto name_off = rva_to_offset(name_rva, raw_sections, header_size, bytes.size());
                if (!name_off) malformed("import library name is not backed by file data");
                ImportEntry entry{text::lower(r.c_string(*name_off, "import library name")), {}};
                if (entry.library.empty()) malformed("empty import library name");

                const std::uint32_t thunk_rva = original_thunk ? original_thunk : first_thunk;
                auto thunk_off = rva_to_offset(thunk_rva, raw_sections, header_size, bytes.size());
                if (!thunk_off) malformed("import thunk array is not backed by file data");
                for (std::size_t t = 0; t < kMaxThunks; ++t) {
                    const std::uint64_t slot = *thunk_off + t * thunk_size;
                    std::uint64_t value = is64 ? r.read<std::uint64_t>(slot, "import thunk")
                                               : r.read<std::uint32_t>(slot, "import thunk");
                    if (value == 0) break;
                    const bool by_ordinal = is64 ? (value >> 63) != 0 : (value >> 31) != 0;
                    if (by_ordinal) {
                        entry.functions.push_back("ord" + std::to_string(value & 0xffff));
                        continue;
                    }
                    auto hint = rva_to_offset(value & 0x7fffffff, raw_sections, header_size, bytes.size());
                    if (!hint) malformed("import name is not backed by file data");
                    entry.functions.push_back(text::lower(r.c_string(*hint + 2, "import name")));
                }
                pe.imports.push_back(std::move(entry));
            }
        }
    }

    pe.strings = extract_strings(bytes);
    pe.overall_entropy = byte_entropy(bytes);
    if (!imphash_input(pe.imports).empty()) pe.imphash = compute_imphash(pe.imports);
    return pe;
}

nlohmann::json to_json(const PeMetadata& pe) {
    nlohmann::json sections = nlohmann::json::array();
    for (const auto& s : pe.sections) {
        sections.push_back({{"name", s.name}, {"raw_size", s.raw_size}, {"entropy", s.entropy}});
    }
    nlohmann::json imports = nlohmann::json::array();
    for (const auto& i : pe.imports) {
        imports.push_back({{"library", i.library}, {"functions", i.functions}});
    }
    return {
        {"size_bytes", pe.size_bytes},
        {"architecture", to_string(pe.architecture)},
        {"entry_point", pe.entry_point},
        {"sections", sections},
        {"imports", imports},
        {"strings", pe.strings},
        {"imphash", pe.imphash ? nlohmann::json(*pe.imphash) : nlohmann::json(nullptr)},
        {"overall_entropy", pe.overall_entropy},
    };
}

PeMetadata pe_from_json(const nlohmann::json& j) {
    PeMetadata pe;
    pe.size_bytes = j.at("size_bytes").get<std::uint64_t>();
    const auto arch = j.at("architecture").get<std::string>();
    pe.architecture = arch == "x86" ? Architecture::X86 : arch == "x86_64" ? Architecture::X86_64 : Architecture::Unknown;
    pe.entry_point = j.at("entry_point").get<std::uint64_t>();
    for (const auto& s : j.at("sections")) {
        pe.sections.push_back({s.at("name").get<std::string>(), s.at("raw_size").get<std::uint64_t>(),
                               s.at("entropy").get<double>()});
    }
    for (const auto& i : j.at("imports")) {
        pe.imports.push_back({i.at("library").get<std::string>(), i.at("functions").get<std::vector<std::string>>()});
    }
    pe.strings = j.at("strings").get<std::vector<std::string>>();
    if (!j.at("imphash").is_null()) pe.imphash = j.at("imphash").get<std::string>();
    pe.overall_entropy = j.at("overall_entropy").get<double>();
    return pe;
}

std::vector<std::uint8_t> read_sample(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open sample " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace triage::binscan
