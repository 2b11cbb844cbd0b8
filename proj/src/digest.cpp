#include "triage/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <stdexcept>

namespace triage::digest {
namespace {

std::string to_hex(const unsigned char* bytes, unsigned int len) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kDigits[bytes[i] >> 4]);
        out.push_back(kDigits[bytes[i] & 0x0f]);
    }
    return out;
}

std::string evp_hex(const EVP_MD* md, const void* data, std::size_t size) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, size) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
        throw std::runtime_error("digest computation failed");
    }
    return to_hex(out.data(), len);
}

}  // namespace

std::string md5_hex(std::span<const std::uint8_t> data) {
    return evp_hex(EVP_md5(), data.data(), data.size());
}

std::string md5_hex(std::string_view text) {
    return evp_hex(EVP_md5(), text.data(), text.size());
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
    return evp_hex(EVP_sha256(), data.data(), data.size());
}

std::string sha256_hex(std::string_view text) {
    return evp_hex(EVP_sha256(), text.data(), text.size());
}

bool is_hex(std::string_view text) noexcept {
    if (text.empty()) return false;
    for (char c : text) {
        bool digit = c >= '0' && c <= '9';
        bool lower = c >= 'a' && c <= 'f';
        bool upper = c >= 'A' && c <= 'F';
        if (!digit && !lower && !upper) return false;
    }
    return true;
}

}  // namespace triage::digest
