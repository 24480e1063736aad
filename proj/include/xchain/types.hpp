#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xchain/hash.hpp"

namespace xchain {

/// Identifier of one blockchain system in the network, 0 <= id < n.
struct SystemId {
  std::uint16_t value = 0;

  constexpr SystemId() = default;
  constexpr explicit SystemId(std::uint16_t v) : value(v) {}

  constexpr auto operator<=>(const SystemId&) const = default;
};

/// Block position inside one chain. Genesis is height 0.
using Height = std::uint64_t;

/// Identifier of one node inside a system. Signatures are simulated as node ids.
using NodeId = std::uint16_t;

/// A quorum proof: sorted, distinct node ids standing in for signatures.
using Proof = std::vector<NodeId>;

/// A proof is well-formed when it names at least `r` distinct nodes of a
/// `q`-node system.
bool proof_is_valid(const Proof& proof, std::uint32_t q, std::uint32_t r);

/// The deterministic r-node signer set used for a block or view at `height`.
Proof quorum_proof(Height height, std::uint32_t q, std::uint32_t r);

enum class TxKind : std::uint8_t { Local = 0, Contract = 1, Target = 2, Reverse = 3 };

std::string_view to_string(TxKind kind);

struct Transaction {
  HashDigest id;
  TxKind kind = TxKind::Local;
  Bytes payload;
  std::vector<HashDigest> preconditions;
  SystemId origin;

  /// Builds a transaction and fills in its content hash.
  static Transaction make(TxKind kind, Bytes payload, std::vector<HashDigest> preconditions,
                          SystemId origin);
  static Transaction make(TxKind kind, std::string_view payload,
                          std::vector<HashDigest> preconditions, SystemId origin);

  /// Hash of kind || len(payload) || payload || count || preconditions || origin.
  HashDigest content_hash() const;

  bool operator==(const Transaction&) const = default;
};

/// A reverse transaction undoing `target`; its only precondition is the target id.
Transaction make_reverse(const Transaction& target, std::string_view payload);

/// Cross-chain contract seen from the local system.
///
/// Wire layout (146 bytes, big-endian):
///   local_tx[32] local_reverse[32] local_expiry[u64] peer[u16]
///   remote_tx[32] remote_reverse[32] remote_expiry[u64]
struct ContractTx {
  HashDigest local_tx;
  HashDigest local_reverse;
  Height local_expiry = 0;
  SystemId peer;
  HashDigest remote_tx;
  HashDigest remote_reverse;
  Height remote_expiry = 0;

  bool operator==(const ContractTx&) const = default;
};

inline constexpr std::size_t kEncodedCtxSize = 32 + 32 + 8 + 2 + 32 + 32 + 8;

Bytes encode_ctx(const ContractTx& ctx);
ContractTx decode_ctx(std::span<const std::uint8_t> data);

/// Given the encoding of ctx_i held by system `self`, returns the encoding
/// of the symmetric contract ctx_j for the peer.
Bytes swap_perspective(std::span<const std::uint8_t> encoded, SystemId self);

/// Wraps a contract in a Contract-kind transaction with no preconditions, so
/// its id is computable by the peer from the symmetric contract alone.
Transaction contract_transaction(const ContractTx& ctx, SystemId origin);

/// Decodes the contract carried by a Contract-kind transaction.
std::optional<ContractTx> contract_of(const Transaction& tx);

/// Header layout: height[u64] prev_hash[32] body_digest[32] n_sigs[u16] sigs[u16]*
struct BlockHeader {
  Height height = 0;
  HashDigest prev_hash;
  HashDigest body_digest;
  std::vector<NodeId> creator_sigs;

  bool operator==(const BlockHeader&) const = default;
};

Bytes encode_header(const BlockHeader& header);
BlockHeader decode_header(std::span<const std::uint8_t> data);
HashDigest header_hash(const BlockHeader& header);

struct Block {
  BlockHeader header;
  std::vector<Transaction> body;
};

/// Hash of the concatenated transaction ids in block order.
HashDigest body_digest(std::span<const Transaction> body);

}  // namespace xchain

template <>
struct std::hash<xchain::SystemId> {
  std::size_t operator()(const xchain::SystemId& id) const noexcept { return id.value; }
};
