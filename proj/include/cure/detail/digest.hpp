#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace cure::detail {

inline std::array<unsigned char, 32> sha256_bytes(std::string_view data) {
  std::array<unsigned char, 32> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  return md;
}

inline std::string to_hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(hex[bytes[i] >> 4]);
    out.push_back(hex[bytes[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  auto md = sha256_bytes(data);
  return to_hex(md.data(), md.size());
}

/// Short digest for call logs: first 16 hex chars of the SHA-256.
inline std::string sha256_hex16(std::string_view data) {
  auto md = sha256_bytes(data);
  return to_hex(md.data(), 8);
}

/// Deterministic 64-bit value derived from the SHA-256 of the input.
/// Used for seeded pseudo-random picks in the mock backend; stable across
/// platforms because it never touches std distributions.
inline std::uint64_t stable_hash64(std::string_view data) {
  auto md = sha256_bytes(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | md[i];
  return v;
}

/// Accumulates fields with length prefixes so ("ab","c") and ("a","bc")
/// can never produce the same digest input.
class DigestBuilder {
 public:
  DigestBuilder& field(std::string_view v) {
    data_ += std::to_string(v.size());
    data_ += ':';
    data_.append(v);
    data_ += ';';
    return *this;
  }
  DigestBuilder& field(std::int64_t v) { return field(std::to_string(v)); }
  DigestBuilder& field(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return field(std::string_view(buf));
  }
  std::string hex() const { return sha256_hex(data_); }
  std::uint64_t hash64() const { return stable_hash64(data_); }

 private:
  std::string data_;
};

}  // namespace cure::detail
