#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xchain/chain.hpp"
#include "xchain/hash.hpp"
#include "xchain/rng.hpp"
#include "xchain/types.hpp"

namespace xchain::testing {

inline SystemConfig system_config(std::uint16_t id, Height t = 0, std::uint32_t k = 5) {
  SystemConfig c;
  c.id = SystemId(id);
  c.t = t;
  c.k = k;
  return c;
}

inline HashDigest random_digest(Rng& rng) {
  HashDigest d;
  for (auto& b : d.bytes) b = static_cast<std::uint8_t>(rng.below(256));
  return d;
}

inline ContractTx random_ctx(Rng& rng) {
  ContractTx c;
  c.local_tx = random_digest(rng);
  c.local_reverse = random_digest(rng);
  c.local_expiry = rng.next();
  c.peer = SystemId(static_cast<std::uint16_t>(rng.below(65536)));
  c.remote_tx = random_digest(rng);
  c.remote_reverse = random_digest(rng);
  c.remote_expiry = rng.next();
  return c;
}

inline Transaction local_tx(const std::string& payload, SystemId origin = SystemId(0)) {
  return Transaction::make(TxKind::Local, payload, {}, origin);
}

/// Appends `count` empty blocks.
inline void grow(Chain& chain, Height count) {
  for (Height i = 0; i < count; ++i) chain.seal();
}

/// Independent big-endian encoder for byte-layout oracles.
inline void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_raw(std::vector<std::uint8_t>& out, const HashDigest& d) {
  out.insert(out.end(), d.bytes.begin(), d.bytes.end());
}

}  // namespace xchain::testing
