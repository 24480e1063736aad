#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "xchain/types.hpp"

namespace xchain {

/// Parameters of one system: q nodes, consensus threshold r, finality depth t,
/// adversary fraction f and view depth k.
struct SystemConfig {
  SystemId id;
  std::uint32_t q = 4;
  std::uint32_t r = 3;
  Height t = 0;
  double f = 0.0;
  std::uint32_t k = 5;

  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  bool operator==(const SystemConfig&) const = default;
};

/// Compact finality summary of one chain.
struct View {
  /// Rolling digest of header hashes [0, m-k).
  HashDigest aggregate;
  /// Header hashes of the finalized heights [m-k, m).
  std::vector<HashDigest> recent;
  Proof proof;
  /// Height of the newest finalized block covered (m - 1).
  Height height = 0;

  /// Number of finalized blocks covered (m).
  Height length() const { return height + 1; }

  bool operator==(const View&) const = default;
};

Bytes encode_view(const View& view);
nlohmann::json view_to_json(const View& v);
View view_from_json(const nlohmann::json& j);

/// Left fold agg = H(agg || h) over `header_hashes`, starting at `seed`.
HashDigest fold_aggregate(HashDigest seed, std::span<const HashDigest> header_hashes);

class InvalidTx : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyChain : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-system ledger. Blocks are produced either atomically through commit()
/// or incrementally through submit() followed by seal().
class Chain {
 public:
  explicit Chain(SystemConfig config);

  const SystemConfig& config() const { return config_; }

  /// Number of blocks, which is also the height of the next block.
  Height height() const { return blocks_.size(); }

  /// Number of blocks with more than t successors.
  Height finalized_length() const;

  const std::vector<Block>& blocks() const { return blocks_; }
  const HashDigest& header_hash_at(Height h) const { return header_hashes_.at(h); }
  std::span<const HashDigest> header_hashes() const { return header_hashes_; }

  /// Fold of header hashes [0, m).
  const HashDigest& aggregate_before(Height m) const { return aggregates_.at(m); }

  /// True iff tx could be added to the next block. For a Contract-kind
  /// transaction this covers the contract itself (not yet committed, expiry
  /// ahead, target not yet committed); see verify_contract.
  bool verify(const Transaction& tx) const;

  /// verify(ctx) = verify(target) plus the expiry check.
  bool verify_contract(const Transaction& contract, const Transaction& target) const;

  /// Height of the committed transaction, or nullopt (the -1 answer).
  std::optional<Height> check(const HashDigest& id) const;

  /// Stages tx into the open block if it verifies. Returns false otherwise.
  bool submit(Transaction tx);
  bool has_staged() const { return !staged_.empty(); }
  std::span<const Transaction> staged() const { return staged_; }

  /// Closes the open block (possibly empty) and applies its effects.
  const Block& seal();

  /// Appends one block holding exactly `txs`; throws InvalidTx and leaves the
  /// chain untouched if any of them fails verification.
  const Block& commit(std::vector<Transaction> txs);

  /// Waiting contracts whose local expiry lies strictly below current_height.
  std::vector<ContractTx> expire_and_unlock(Height current_height) const;

  /// Removes a contract from the waiting list and unlocks its target.
  bool remove_from_waiting(const HashDigest& ctx_tx_id);

  bool in_waiting_list(const HashDigest& ctx_tx_id) const { return waiting_.contains(ctx_tx_id); }
  bool is_locked(const HashDigest& id) const { return locked_.contains(id); }
  bool is_committed(const HashDigest& id) const { return tx_index_.contains(id); }

  const std::map<HashDigest, ContractTx>& waiting_list() const { return waiting_; }
  const std::set<HashDigest>& locked() const { return locked_; }

  /// Rebuilds the first `blocks` blocks into a fresh chain.
  Chain prefix(Height blocks) const;

  nlohmann::json debug_json() const;

 private:
  void apply_block(Block block);

  SystemConfig config_;
  std::vector<Block> blocks_;
  std::vector<HashDigest> header_hashes_;
  std::vector<HashDigest> aggregates_;
  std::unordered_map<HashDigest, Height, HashDigestHasher> tx_index_;
  std::map<HashDigest, ContractTx> waiting_;
  std::unordered_map<HashDigest, HashDigest, HashDigestHasher> target_to_ctx_;
  std::set<HashDigest> locked_;
  std::vector<Transaction> staged_;
  std::unordered_set<HashDigest, HashDigestHasher> staged_ids_;
};

/// View over the whole finalized prefix. Throws EmptyChain if nothing is final.
View generate_view(const Chain& chain, std::uint32_t k, const SystemConfig& config);

/// View over the first `length` finalized blocks (historic views for pulls).
View view_at(const Chain& chain, std::uint32_t k, Height length);

}  // namespace xchain
