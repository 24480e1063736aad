#include "xchain/types.hpp"

#include <algorithm>

namespace xchain {

bool proof_is_valid(const Proof& proof, std::uint32_t q, std::uint32_t r) {
  if (proof.size() < r) return false;
  for (std::size_t i = 0; i < proof.size(); ++i) {
    if (proof[i] >= q) return false;
    if (i > 0 && proof[i] <= proof[i - 1]) return false;
  }
  return true;
}

Proof quorum_proof(Height height, std::uint32_t q, std::uint32_t r) {
  Proof p;
  p.reserve(r);
  for (std::uint32_t x = 0; x < r; ++x) {
    p.push_back(static_cast<NodeId>((height + x) % q));
  }
  std::sort(p.begin(), p.end());
  return p;
}

std::string_view to_string(TxKind kind) {
  switch (kind) {
    case TxKind::Local: return "local";
    case TxKind::Contract: return "contract";
    case TxKind::Target: return "target";
    case TxKind::Reverse: return "reverse";
  }
  return "unknown";
}

HashDigest Transaction::content_hash() const {
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(kind));
  w.put_u32(static_cast<std::uint32_t>(payload.size()));
  w.put_bytes(payload);
  w.put_u32(static_cast<std::uint32_t>(preconditions.size()));
  for (const auto& p : preconditions) w.put_digest(p);
  w.put_u16(origin.value);
  return hash_bytes(w.bytes());
}

Transaction Transaction::make(TxKind kind, Bytes payload, std::vector<HashDigest> preconditions,
                              SystemId origin) {
  Transaction tx;
  tx.kind = kind;
  tx.payload = std::move(payload);
  tx.preconditions = std::move(preconditions);
  tx.origin = origin;
  tx.id = tx.content_hash();
  return tx;
}

Transaction Transaction::make(TxKind kind, std::string_view payload,
                              std::vector<HashDigest> preconditions, SystemId origin) {
  return make(kind, Bytes(payload.begin(), payload.end()), std::move(preconditions), origin);
}

Transaction make_reverse(const Transaction& target, std::string_view payload) {
  return Transaction::make(TxKind::Reverse, payload, {target.id}, target.origin);
}

Bytes encode_ctx(const ContractTx& ctx) {
  ByteWriter w;
  w.put_digest(ctx.local_tx);
  w.put_digest(ctx.local_reverse);
  w.put_u64(ctx.local_expiry);
  w.put_u16(ctx.peer.value);
  w.put_digest(ctx.remote_tx);
  w.put_digest(ctx.remote_reverse);
  w.put_u64(ctx.remote_expiry);
  return w.take();
}

ContractTx decode_ctx(std::span<const std::uint8_t> data) {
  if (data.size() != kEncodedCtxSize) throw DecodeError("contract encoding must be 146 bytes");
  ByteReader r(data);
  ContractTx ctx;
  ctx.local_tx = r.get_digest();
  ctx.local_reverse = r.get_digest();
  ctx.local_expiry = r.get_u64();
  ctx.peer = SystemId(r.get_u16());
  ctx.remote_tx = r.get_digest();
  ctx.remote_reverse = r.get_digest();
  ctx.remote_expiry = r.get_u64();
  return ctx;
}

Bytes swap_perspective(std::span<const std::uint8_t> encoded, SystemId self) {
  const ContractTx c = decode_ctx(encoded);
  ByteWriter w;
  w.put_digest(c.remote_tx);
  w.put_digest(c.remote_reverse);
  w.put_u64(c.remote_expiry);
  w.put_u16(self.value);
  w.put_digest(c.local_tx);
  w.put_digest(c.local_reverse);
  w.put_u64(c.local_expiry);
  return w.take();
}

Transaction contract_transaction(const ContractTx& ctx, SystemId origin) {
  return Transaction::make(TxKind::Contract, encode_ctx(ctx), {}, origin);
}

std::optional<ContractTx> contract_of(const Transaction& tx) {
  if (tx.kind != TxKind::Contract) return std::nullopt;
  try {
    return decode_ctx(tx.payload);
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

Bytes encode_header(const BlockHeader& header) {
  ByteWriter w;
  w.put_u64(header.height);
  w.put_digest(header.prev_hash);
  w.put_digest(header.body_digest);
  w.put_u16(static_cast<std::uint16_t>(header.creator_sigs.size()));
  for (auto s : header.creator_sigs) w.put_u16(s);
  return w.take();
}

BlockHeader decode_header(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  BlockHeader h;
  h.height = r.get_u64();
  h.prev_hash = r.get_digest();
  h.body_digest = r.get_digest();
  const auto n = r.get_u16();
  h.creator_sigs.reserve(n);
  for (std::uint16_t i = 0; i < n; ++i) h.creator_sigs.push_back(r.get_u16());
  if (!r.done()) throw DecodeError("trailing bytes after header");
  return h;
}

HashDigest header_hash(const BlockHeader& header) { return hash_bytes(encode_header(header)); }

HashDigest body_digest(std::span<const Transaction> body) {
  ByteWriter w;
  for (const auto& tx : body) w.put_digest(tx.id);
  return hash_bytes(w.bytes());
}

}  // namespace xchain
