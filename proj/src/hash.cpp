#include "xchain/hash.hpp"

#include <openssl/evp.h>

#include <cstring>

namespace xchain {

bool HashDigest::is_zero() const {
  for (auto b : bytes) {
    if (b != 0) return false;
  }
  return true;
}

std::string HashDigest::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0x0f]);
  }
  return s;
}

std::optional<HashDigest> HashDigest::from_hex(std::string_view text) {
  if (text.size() != 64) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  HashDigest d;
  for (std::size_t i = 0; i < 32; ++i) {
    int hi = nibble(text[2 * i]);
    int lo = nibble(text[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    d.bytes[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return d;
}

std::size_t HashDigestHasher::operator()(const HashDigest& d) const noexcept {
  std::size_t v;
  std::memcpy(&v, d.bytes.data(), sizeof(v));
  return v;
}

HashDigest hash_bytes(std::span<const std::uint8_t> data) {
  HashDigest out;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.bytes.size()) {
    throw std::runtime_error("sha256 failed");
  }
  return out;
}

HashDigest hash_bytes(std::string_view text) {
  return hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

HashDigest hash_pair(const HashDigest& a, const HashDigest& b) {
  std::array<std::uint8_t, 64> buf;
  std::memcpy(buf.data(), a.bytes.data(), 32);
  std::memcpy(buf.data() + 32, b.bytes.data(), 32);
  return hash_bytes(buf);
}

void ByteWriter::put_u16(std::uint16_t v) {
  out_.push_back(static_cast<std::uint8_t>(v >> 8));
  out_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::put_digest(const HashDigest& d) {
  out_.insert(out_.end(), d.bytes.begin(), d.bytes.end());
}

void ByteWriter::put_bytes(std::span<const std::uint8_t> data) {
  out_.insert(out_.end(), data.begin(), data.end());
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw DecodeError("truncated input");
}

std::uint8_t ByteReader::get_u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::get_u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::get_u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
  return v;
}

std::uint64_t ByteReader::get_u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
  return v;
}

HashDigest ByteReader::get_digest() {
  need(32);
  HashDigest d;
  std::memcpy(d.bytes.data(), data_.data() + pos_, 32);
  pos_ += 32;
  return d;
}

Bytes ByteReader::get_bytes(std::size_t n) {
  need(n);
  Bytes b(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
          data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return b;
}

}  // namespace xchain
