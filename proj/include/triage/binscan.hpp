#pragma once

// Static triage of binary samples. Nothing here executes or unpacks the
// sample; every read is bounds-checked against the input span.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace triage::binscan {

using Bytes = std::span<const std::uint8_t>;

enum class FileType { PeExecutable, Elf, Unknown };
enum class Architecture { X86, X86_64, Unknown };
enum class SizeClass { Small, Medium, Large, Oversize };

std::string_view to_string(FileType t) noexcept;
std::string_view to_string(Architecture a) noexcept;
std::string_view to_string(SizeClass c) noexcept;

inline constexpr std::uint64_t kSmallLimit = 100 * 1024;
inline constexpr std::uint64_t kMediumLimit = 500 * 1024;
inline constexpr std::uint64_t kLargeLimit = 5 * 1024 * 1024;

inline constexpr std::size_t kMinStringRun = 5;

struct Section {
    std::string name;
    std::uint64_t raw_size = 0;
    double entropy = 0.0;
};

struct ImportEntry {
    std::string library;                 // case-folded, e.g. "kernel32.dll"
    std::vector<std::string> functions;  // symbol names or "ord<N>"
};

struct PeMetadata {
    std::uint64_t size_bytes = 0;
    Architecture architecture = Architecture::Unknown;
    std::uint64_t entry_point = 0;
    std::vector<Section> sections;
    std::vector<ImportEntry> imports;
    std::vector<std::string> strings;
    std::optional<std::string> imphash;
    double overall_entropy = 0.0;
};

FileType detect_file_type(Bytes bytes) noexcept;

/// Parses headers, sections, the import directory and printable strings.
/// Throws Error{MalformedHeader} for truncated or inconsistent headers.
PeMetadata parse_pe(Bytes bytes);

/// Reference imphash: MD5 of comma-joined "lib.func" pairs where lib is
/// lowercased with a trailing .dll/.sys/.ocx removed and func lowercased.
/// Throws Error{EmptyImports} when no function is imported.
std::string compute_imphash(std::span<const ImportEntry> imports);

/// The exact string hashed by compute_imphash.
std::string imphash_input(std::span<const ImportEntry> imports);

/// Shannon entropy of the byte histogram in bits/byte. Throws EmptyInput.
double byte_entropy(Bytes bytes);

SizeClass size_class(std::uint64_t size_bytes) noexcept;

/// ASCII runs and UTF-16LE runs of at least `min_run` printable characters.
std::vector<std::string> extract_strings(Bytes bytes, std::size_t min_run = kMinStringRun);

nlohmann::json to_json(const PeMetadata& pe);
PeMetadata pe_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> read_sample(const std::string& path);

}  // namespace triage::binscan
