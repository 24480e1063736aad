#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xchain {

using Bytes = std::vector<std::uint8_t>;

/// 256-bit digest. Equality is bit-exact.
struct HashDigest {
  std::array<std::uint8_t, 32> bytes{};

  static constexpr HashDigest zero() { return HashDigest{}; }

  bool is_zero() const;
  std::string hex() const;
  static std::optional<HashDigest> from_hex(std::string_view text);

  auto operator<=>(const HashDigest&) const = default;
};

struct HashDigestHasher {
  std::size_t operator()(const HashDigest& d) const noexcept;
};

/// SHA-256 of `data`.
HashDigest hash_bytes(std::span<const std::uint8_t> data);
HashDigest hash_bytes(std::string_view text);

/// H(a || b), the step used by the rolling view aggregate.
HashDigest hash_pair(const HashDigest& a, const HashDigest& b);

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Big-endian fixed-width writer used for every on-wire layout.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { out_.push_back(v); }
  void put_u16(std::uint16_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_digest(const HashDigest& d);
  void put_bytes(std::span<const std::uint8_t> data);

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8();
  std::uint16_t get_u16();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  HashDigest get_digest();
  Bytes get_bytes(std::size_t n);

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace xchain
