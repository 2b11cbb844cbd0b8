#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace triage::digest {

/// Lowercase hex MD5 of `data`.
std::string md5_hex(std::span<const std::uint8_t> data);
std::string md5_hex(std::string_view text);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

bool is_hex(std::string_view text) noexcept;

}  // namespace triage::digest
