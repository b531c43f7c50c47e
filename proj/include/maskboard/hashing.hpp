#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "maskboard/error.hpp"

namespace maskboard {

inline std::string to_hex(const unsigned char* bytes, std::size_t size) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(size * 2U);
  for (std::size_t i = 0; i < size; ++i) {
    out.push_back(kHex[(bytes[i] >> 4U) & 0x0FU]);
    out.push_back(kHex[bytes[i] & 0x0FU]);
  }
  return out;
}

inline std::array<unsigned char, 32> sha256_digest(std::string_view data) {
  std::array<unsigned char, 32> digest{};
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  return digest;
}

/// Lowercase hex SHA-256, used as the content address throughout the project.
inline std::string sha256_hex(std::string_view data) {
  const auto digest = sha256_digest(data);
  return to_hex(digest.data(), digest.size());
}

/// First 8 digest bytes as a little-endian integer; seeds deterministic generators.
inline std::uint64_t sha256_seed(std::string_view data) {
  const auto digest = sha256_digest(data);
  std::uint64_t seed = 0;
  for (int i = 7; i >= 0; --i) {
    seed = (seed << 8U) | digest[static_cast<std::size_t>(i)];
  }
  return seed;
}

}  // namespace maskboard
