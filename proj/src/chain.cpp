#include "xchain/chain.hpp"

#include <algorithm>

namespace xchain {

void SystemConfig::validate() const {
  if (r < 1 || r > q) throw std::invalid_argument("system config: need 1 <= r <= q");
  if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("system config: f outside [0, 1]");
  if (k < 1) throw std::invalid_argument("system config: k must be >= 1");
  if (q > 65535) throw std::invalid_argument("system config: q exceeds node id width");
}

Bytes encode_view(const View& view) {
  ByteWriter w;
  w.put_u64(view.height);
  w.put_digest(view.aggregate);
  w.put_u16(static_cast<std::uint16_t>(view.recent.size()));
  for (const auto& h : view.recent) w.put_digest(h);
  w.put_u16(static_cast<std::uint16_t>(view.proof.size()));
  for (auto p : view.proof) w.put_u16(p);
  return w.take();
}

namespace {

HashDigest digest_from_json(const nlohmann::json& j) {
  auto d = HashDigest::from_hex(j.get<std::string>());
  if (!d) throw DecodeError("bad digest: " + j.dump());
  return *d;
}

}  // namespace

nlohmann::json view_to_json(const View& v) {
  nlohmann::json recent = nlohmann::json::array();
  for (const auto& h : v.recent) recent.push_back(h.hex());
  return {{"height", v.height},
          {"aggregate", v.aggregate.hex()},
          {"recent", std::move(recent)},
          {"proof", v.proof}};
}

View view_from_json(const nlohmann::json& j) {
  View v;
  v.height = j.at("height").get<Height>();
  v.aggregate = digest_from_json(j.at("aggregate"));
  for (const auto& h : j.at("recent")) v.recent.push_back(digest_from_json(h));
  v.proof = j.at("proof").get<Proof>();
  return v;
}

HashDigest fold_aggregate(HashDigest seed, std::span<const HashDigest> header_hashes) {
  for (const auto& h : header_hashes) seed = hash_pair(seed, h);
  return seed;
}

Chain::Chain(SystemConfig config) : config_(config) {
  config_.validate();
  aggregates_.push_back(HashDigest::zero());
}

Height Chain::finalized_length() const {
  const Height n = height();
  return n > config_.t ? n - config_.t - 1 : 0;
}

bool Chain::verify(const Transaction& tx) const {
  if (tx_index_.contains(tx.id)) return false;
  if (staged_ids_.contains(tx.id)) return false;
  for (const auto& pre : tx.preconditions) {
    if (!tx_index_.contains(pre)) return false;
    if (locked_.contains(pre)) return false;
  }
  if (tx.kind == TxKind::Contract) {
    auto ctx = contract_of(tx);
    if (!ctx) return false;
    if (ctx->local_expiry <= height()) return false;
    if (tx_index_.contains(ctx->local_tx)) return false;
    if (staged_ids_.contains(ctx->local_tx)) return false;
  }
  return true;
}

bool Chain::verify_contract(const Transaction& contract, const Transaction& target) const {
  auto ctx = contract_of(contract);
  if (!ctx || ctx->local_tx != target.id) return false;
  return verify(contract) && verify(target);
}

std::optional<Height> Chain::check(const HashDigest& id) const {
  auto it = tx_index_.find(id);
  if (it == tx_index_.end()) return std::nullopt;
  return it->second;
}

bool Chain::submit(Transaction tx) {
  if (!verify(tx)) return false;
  staged_ids_.insert(tx.id);
  staged_.push_back(std::move(tx));
  return true;
}

const Block& Chain::seal() {
  Block b;
  b.body = std::move(staged_);
  staged_.clear();
  staged_ids_.clear();
  apply_block(std::move(b));
  return blocks_.back();
}

const Block& Chain::commit(std::vector<Transaction> txs) {
  if (!staged_.empty()) throw std::logic_error("commit() with an open block");
  for (auto& tx : txs) {
    const HashDigest id = tx.id;
    if (!submit(std::move(tx))) {
      staged_.clear();
      staged_ids_.clear();
      throw InvalidTx("transaction fails verify: " + id.hex());
    }
  }
  return seal();
}

void Chain::apply_block(Block block) {
  const Height h = height();
  block.header.height = h;
  block.header.prev_hash = h == 0 ? HashDigest::zero() : header_hashes_.back();
  block.header.body_digest = body_digest(block.body);
  block.header.creator_sigs = quorum_proof(h, config_.q, config_.r);

  for (const auto& tx : block.body) {
    tx_index_.emplace(tx.id, h);
    if (auto ctx = contract_of(tx)) {
      waiting_.emplace(tx.id, *ctx);
      target_to_ctx_.emplace(ctx->local_tx, tx.id);
    }
  }
  for (const auto& tx : block.body) {
    if (target_to_ctx_.contains(tx.id)) locked_.insert(tx.id);
  }
  // A target committed before its contract (both already indexed) is locked too.
  for (const auto& tx : block.body) {
    if (auto ctx = contract_of(tx); ctx && tx_index_.contains(ctx->local_tx)) {
      locked_.insert(ctx->local_tx);
    }
  }

  const HashDigest hh = header_hash(block.header);
  header_hashes_.push_back(hh);
  aggregates_.push_back(hash_pair(aggregates_.back(), hh));
  blocks_.push_back(std::move(block));
}

std::vector<ContractTx> Chain::expire_and_unlock(Height current_height) const {
  std::vector<ContractTx> out;
  for (const auto& [id, ctx] : waiting_) {
    if (ctx.local_expiry < current_height) out.push_back(ctx);
  }
  return out;
}

bool Chain::remove_from_waiting(const HashDigest& ctx_tx_id) {
  auto it = waiting_.find(ctx_tx_id);
  if (it == waiting_.end()) return false;
  const HashDigest target = it->second.local_tx;
  waiting_.erase(it);
  target_to_ctx_.erase(target);
  locked_.erase(target);
  return true;
}

Chain Chain::prefix(Height blocks) const {
  if (blocks > height()) throw std::out_of_range("prefix longer than chain");
  Chain c(config_);
  for (Height h = 0; h < blocks; ++h) {
    for (const auto& tx : blocks_[h].body) {
      c.staged_ids_.insert(tx.id);
      c.staged_.push_back(tx);
    }
    c.seal();
  }
  // Timeouts already processed on this chain stay processed on the prefix.
  for (auto it = c.waiting_.begin(); it != c.waiting_.end();) {
    if (!waiting_.contains(it->first)) {
      const HashDigest target = it->second.local_tx;
      c.target_to_ctx_.erase(target);
      c.locked_.erase(target);
      it = c.waiting_.erase(it);
    } else {
      ++it;
    }
  }
  return c;
}

nlohmann::json Chain::debug_json() const {
  using nlohmann::json;
  json j;
  j["system"] = config_.id.value;
  j["height"] = height();
  j["finalized_length"] = finalized_length();
  json blocks = json::array();
  for (const auto& b : blocks_) {
    json txs = json::array();
    for (const auto& tx : b.body) txs.push_back({{"id", tx.id.hex()}, {"kind", to_string(tx.kind)}});
    blocks.push_back({{"height", b.header.height},
                      {"hash", header_hashes_[b.header.height].hex()},
                      {"txs", std::move(txs)}});
  }
  j["blocks"] = std::move(blocks);
  json waiting = json::array();
  for (const auto& [id, ctx] : waiting_) {
    waiting.push_back({{"ctx", id.hex()}, {"target", ctx.local_tx.hex()},
                       {"local_expiry", ctx.local_expiry}});
  }
  j["waiting_list"] = std::move(waiting);
  json locked = json::array();
  for (const auto& id : locked_) locked.push_back(id.hex());
  j["locked"] = std::move(locked);
  return j;
}

View view_at(const Chain& chain, std::uint32_t k, Height length) {
  if (length == 0) throw EmptyChain("no finalized block");
  if (length > chain.finalized_length()) throw std::out_of_range("view beyond finalized prefix");
  const Height split = length > k ? length - k : 0;
  View v;
  v.aggregate = chain.aggregate_before(split);
  auto hashes = chain.header_hashes();
  v.recent.assign(hashes.begin() + static_cast<std::ptrdiff_t>(split),
                  hashes.begin() + static_cast<std::ptrdiff_t>(length));
  v.height = length - 1;
  v.proof = quorum_proof(v.height, chain.config().q, chain.config().r);
  return v;
}

View generate_view(const Chain& chain, std::uint32_t k, const SystemConfig& config) {
  const Height m = chain.finalized_length();
  if (m == 0) throw EmptyChain("no finalized block");
  View v = view_at(chain, k, m);
  v.proof = quorum_proof(v.height, config.q, config.r);
  return v;
}

}  // namespace xchain
