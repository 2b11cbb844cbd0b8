#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace triage::text {

inline bool is_alnum(char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline char to_lower(char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline char to_upper(char c) noexcept {
    return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
}

std::string lower(std::string_view s);
std::string upper(std::string_view s);
std::string trim(std::string_view s);

/// Trim, then collapse every internal whitespace run to one space.
std::string collapse_whitespace(std::string_view s);

bool iequals(std::string_view a, std::string_view b) noexcept;
bool icontains(std::string_view haystack, std::string_view needle);
bool starts_with_icase(std::string_view s, std::string_view prefix) noexcept;

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Whitespace-delimited word count.
std::size_t word_count(std::string_view s);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace triage::text
