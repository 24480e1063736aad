#include "xchain/sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>
#include <variant>

#include "xchain/cbc.hpp"
#include "xchain/channel.hpp"

namespace xchain {

using nlohmann::json;

// ---------------------------------------------------------------- config

void SimConfig::finalize() {
  if (systems.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      SystemConfig c = system_defaults;
      c.id = SystemId(static_cast<std::uint16_t>(i));
      systems.push_back(c);
    }
  }
}

void SimConfig::validate() const {
  if (n < 2) throw ConfigError("n must be at least 2");
  if (n > UINT16_MAX) throw ConfigError("n too large");
  if (!(p_c >= 0.0 && p_c < 1.0)) throw ConfigError("p_c must lie in [0, 1)");
  if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("g must lie in [0, 1]");
  if (block_interval == 0) throw ConfigError("block_interval must be positive");
  if (poll_interval == 0) throw ConfigError("poll_interval must be positive");
  if (gossip_timer == 0) throw ConfigError("gossip_timer must be positive");
  if (!(expiry_factor > 0.0)) throw ConfigError("expiry_factor must be positive");
  if (!(expected_gap >= 0.0)) throw ConfigError("expected_gap must be non-negative");
  if (!(dependency_rate >= 0.0 && dependency_rate <= 1.0)) {
    throw ConfigError("dependency_rate must lie in [0, 1]");
  }
  if (systems.size() != n) throw ConfigError("systems list does not match n");
  for (std::size_t i = 0; i < n; ++i) {
    if (systems[i].id.value != i) throw ConfigError("system ids must be 0..n-1 in order");
    try {
      systems[i].validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  Topology topo;
  try {
    topo = topology();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!adversary.active() && !topo.connected()) throw ConfigError("topology is not connected");
  try {
    adversary.validate(systems);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Height SimConfig::expiry_margin(std::uint32_t k) const {
  return static_cast<Height>(std::ceil(expiry_factor * (static_cast<double>(k) + expected_gap)));
}

Topology SimConfig::topology() const {
  if (edges.empty()) return Topology::full_mesh(n);
  return Topology::from_edges(n, edges);
}

json to_json(const SimConfig& c) {
  auto sys_json = [](const SystemConfig& s) {
    return json{{"q", s.q}, {"r", s.r}, {"t", s.t}, {"f", s.f}, {"k", s.k}};
  };
  json j;
  j["name"] = c.name;
  j["n"] = c.n;
  j["p_c"] = c.p_c;
  j["g"] = c.g;
  j["num_blocks"] = c.num_blocks;
  j["block_interval"] = c.block_interval;
  j["seed"] = c.seed;
  j["latency"] = c.latency;
  j["jitter"] = c.jitter;
  j["gossip_timer"] = c.gossip_timer;
  j["relay_on_update"] = c.relay_on_update;
  j["poll_interval"] = c.poll_interval;
  j["expiry_factor"] = c.expiry_factor;
  j["expected_gap"] = c.expected_gap;
  j["expiry_jitter"] = c.expiry_jitter;
  j["patience"] = c.patience ? json(*c.patience) : json(nullptr);
  j["dependency_rate"] = c.dependency_rate;
  j["offer_delay_max"] = c.offer_delay_max;
  j["drain_cap"] = c.drain_cap ? json(*c.drain_cap) : json(nullptr);
  if (c.edges.empty()) {
    j["topology"] = "full";
  } else {
    json edges = json::array();
    for (const auto& [a, b] : c.edges) edges.push_back({a.value, b.value});
    j["topology"] = {{"edges", edges}};
  }
  j["defaults"] = sys_json(c.system_defaults);
  json systems = json::array();
  for (const auto& s : c.systems) {
    if (s.q != c.system_defaults.q || s.r != c.system_defaults.r || s.t != c.system_defaults.t ||
        s.f != c.system_defaults.f || s.k != c.system_defaults.k) {
      json e = sys_json(s);
      e["id"] = s.id.value;
      systems.push_back(e);
    }
  }
  j["systems"] = systems;
  j["adversary"] = to_json(c.adversary);
  j["record_gap_samples"] = c.record_gap_samples;
  return j;
}

// ---------------------------------------------------------------- metrics

namespace {

std::uint64_t max_of(const std::vector<std::uint64_t>& v) {
  return v.empty() ? 0 : *std::max_element(v.begin(), v.end());
}

std::uint64_t sum_of(const std::vector<std::uint64_t>& v) {
  std::uint64_t s = 0;
  for (auto x : v) s += x;
  return s;
}

}  // namespace

std::uint64_t Metrics::max_requests() const { return max_of(requests_sent); }
std::uint64_t Metrics::max_gossips() const { return max_of(gossips_sent); }
std::uint64_t Metrics::total_requests() const { return sum_of(requests_sent); }
std::uint64_t Metrics::total_gossips() const { return sum_of(gossips_sent); }

std::uint64_t Metrics::gap_count() const {
  std::uint64_t c = 0;
  for (const auto& [gap, f] : gap_histogram) c += f;
  return c;
}

double Metrics::mean_gap() const {
  const auto c = gap_count();
  if (c == 0) return 0.0;
  double s = 0.0;
  for (const auto& [gap, f] : gap_histogram) s += static_cast<double>(gap) * static_cast<double>(f);
  return s / static_cast<double>(c);
}

double Metrics::gap_variance() const {
  const auto c = gap_count();
  if (c == 0) return 0.0;
  const double mu = mean_gap();
  double s = 0.0;
  for (const auto& [gap, f] : gap_histogram) {
    const double d = static_cast<double>(gap) - mu;
    s += d * d * static_cast<double>(f);
  }
  return s / static_cast<double>(c);
}

Height Metrics::gap_percentile(double pct) const {
  const auto c = gap_count();
  if (c == 0) return 0;
  auto rank = static_cast<std::uint64_t>(std::ceil(pct / 100.0 * static_cast<double>(c)));
  rank = std::clamp<std::uint64_t>(rank, 1, c);
  std::uint64_t seen = 0;
  for (const auto& [gap, f] : gap_histogram) {
    seen += f;
    if (seen >= rank) return gap;
  }
  return gap_histogram.rbegin()->first;
}

std::string_view to_string(TaskOutcome o) {
  switch (o) {
    case TaskOutcome::Succeeded: return "succeeded";
    case TaskOutcome::Reversed: return "reversed";
    case TaskOutcome::Aborted: return "aborted";
    case TaskOutcome::Partial: return "partial";
  }
  return "unknown";
}

SideState side_state(const Chain& chain, const Transaction& ctx, const Transaction& target,
                     const Transaction& reverse) {
  return {chain.is_committed(ctx.id), chain.is_committed(target.id),
          chain.is_committed(reverse.id)};
}

TaskOutcome classify_task(const SideState& i, const SideState& j) {
  if ((i.reverse && !i.target) || (j.reverse && !j.target)) return TaskOutcome::Partial;
  if (i.target && j.target && !i.reverse && !j.reverse) return TaskOutcome::Succeeded;
  if (!i.target && !j.target) return TaskOutcome::Aborted;
  const bool i_ok = !i.target || i.reverse;
  const bool j_ok = !j.target || j.reverse;
  return i_ok && j_ok ? TaskOutcome::Reversed : TaskOutcome::Partial;
}

json to_json(const AttackReport& r) {
  json victims = json::array();
  for (const auto& v : r.victims) {
    victims.push_back({{"system", v.system.value},
                       {"outcome", v.outcome},
                       {"expiry_tick", v.expiry_tick ? json(*v.expiry_tick) : json(nullptr)},
                       {"peer_flagged", v.peer_flagged}});
  }
  json audit = json::array();
  for (const auto& a : r.audit) {
    audit.push_back({{"task", a.task}, {"system", a.system.value}, {"reason", a.reason}});
  }
  json adv1 = json::array();
  for (const auto& a : r.adv1) adv1.push_back(to_json(a));
  return {{"detected", r.detected},
          {"detection_tick", r.detection_tick ? json(*r.detection_tick) : json(nullptr)},
          {"evidence_count", r.evidence_count},
          {"victims", victims},
          {"later_victim_expiry_tick",
           r.later_victim_expiry_tick ? json(*r.later_victim_expiry_tick) : json(nullptr)},
          {"detected_before_expiry", r.detected_before_expiry},
          {"double_completion", r.double_completion},
          {"some_victim_protected", r.some_victim_protected},
          {"audit", audit},
          {"adv1", adv1}};
}

std::uint64_t draw_task_count(double p_c, Rng& rng) {
  std::uint64_t count = 0;
  while (rng.uniform01() < p_c) ++count;
  return count;
}

std::vector<GapRecord> sample_gap(const std::vector<ViewList>& view_lists,
                                  const std::vector<Height>& true_heights, std::uint64_t tick,
                                  const std::vector<bool>& honest) {
  std::vector<GapRecord> out;
  const std::size_t n = view_lists.size();
  auto is_honest = [&](std::size_t i) { return honest.empty() || honest[i]; };
  for (std::size_t o = 0; o < n; ++o) {
    if (!is_honest(o)) continue;
    for (std::size_t x = 0; x < n; ++x) {
      if (x == o || !is_honest(x)) continue;
      const SystemId observed(static_cast<std::uint16_t>(x));
      const View* v = view_lists[o].find(observed);
      const Height truth = true_heights[x];
      Height gap = truth;  // nothing known counts from height 0
      if (v != nullptr) gap = truth > v->height ? truth - v->height : 0;
      out.push_back({tick, SystemId(static_cast<std::uint16_t>(o)), observed, gap});
    }
  }
  return out;
}

std::vector<AuditFlag> audit_late_commits(const std::vector<TaskRecord>& tasks,
                                          const std::vector<Chain>& chains) {
  std::vector<AuditFlag> flags;
  for (const auto& t : tasks) {
    const Chain& ci = chains.at(t.initiator.value);
    const Chain& cj = chains.at(t.counterparty.value);
    const SideState si = side_state(ci, t.ctx_i, t.tx_i, t.rev_i);
    const SideState sj = side_state(cj, t.ctx_j, t.tx_j, t.rev_j);
    // The peer completed and kept its target, yet this side reversed.
    if (si.reverse && sj.target && !sj.reverse) {
      flags.push_back({t.id, t.initiator, "reverse committed after peer completed"});
    }
    if (sj.reverse && si.target && !si.reverse) {
      flags.push_back({t.id, t.counterparty, "reverse committed after peer completed"});
    }
  }
  return flags;
}

// ---------------------------------------------------------------- engine

namespace {

enum class Purpose : std::uint8_t { Poll, Timeout };

struct OfferMsg {
  std::uint64_t task;
};

struct CheckReqMsg {
  std::uint64_t task;
  Purpose purpose;
  CheckRequest req;
};

struct CheckRespMsg {
  std::uint64_t task;
  Purpose purpose;
  CheckResponse resp;
};

struct Envelope {
  std::uint64_t deliver;
  std::uint64_t seq;
  SystemId from;
  SystemId to;
  std::variant<OfferMsg, CheckReqMsg, CheckRespMsg, GossipMessage> body;
};

struct Later {
  bool operator()(const Envelope& a, const Envelope& b) const {
    return std::tie(a.deliver, a.seq) > std::tie(b.deliver, b.seq);
  }
};

struct Session {
  CbcSession cbc;
  std::size_t logged = 0;
  std::size_t branch = 0;
  Height patience = 0;
  bool poll_outstanding = false;
  std::optional<Height> last_poll_block;
  bool query_outstanding = false;
  std::optional<Height> last_query_block;
  std::optional<Height> await_since;
};

struct PendingPull {
  View candidate;
  Height sent_block;
};

struct Node {
  SystemId id;
  std::vector<Chain> branches;
  ViewList view_list;
  EvidenceBook book;
  std::map<std::uint64_t, Session> sessions;
  Rng rng;
  bool relay_pending = false;
  Height last_push_block = 0;
  bool adversary = false;
  std::map<SystemId, PendingPull> pulls;
  std::optional<HashDigest> last_target;
  std::vector<Transaction> late_reverses;
};

bool staged_contains(const Chain& chain, const HashDigest& id) {
  for (const auto& tx : chain.staged()) {
    if (tx.id == id) return true;
  }
  return false;
}

class Engine {
 public:
  explicit Engine(SimConfig cfg)
      : cfg_(std::move(cfg)),
        registry_(cfg_.systems),
        topo_(cfg_.topology()),
        net_rng_(Rng::substream(cfg_.seed, 0xffff)),
        adv_rng_(Rng::substream(cfg_.seed, 0xfffe)) {
    out_.metrics.requests_sent.assign(cfg_.n, 0);
    out_.metrics.gossips_sent.assign(cfg_.n, 0);
    for (std::size_t i = 0; i < cfg_.n; ++i) {
      Node node;
      node.id = SystemId(static_cast<std::uint16_t>(i));
      node.rng = Rng::substream(cfg_.seed, i);
      node.adversary = cfg_.adversary.kind == AdversaryKind::Adv2 &&
                       cfg_.adversary.target_system == node.id;
      Chain chain(registry_[i]);
      for (Height b = 0; b <= registry_[i].t + 1; ++b) chain.seal();
      node.branches.push_back(std::move(chain));
      node.view_list.owner = node.id;
      nodes_.push_back(std::move(node));
    }
    for (auto& node : nodes_) {
      for (const auto& other : nodes_) {
        const Chain& c = other.branches[0];
        node.view_list.entries[other.id] = generate_view(c, c.config().k, c.config());
      }
    }
    for (const auto& s : registry_) max_k_ = std::max(max_k_, s.k);
    if (cfg_.adversary.kind == AdversaryKind::Adv1) {
      const auto& target = registry_.at(cfg_.adversary.target_system.value);
      std::uint32_t controlled = target.r - 1;
      auto it = cfg_.adversary.controlled.find(target.id);
      if (it != cfg_.adversary.controlled.end()) {
        controlled = static_cast<std::uint32_t>(std::floor(it->second * target.q));
      }
      adv1_.mode = cfg_.adversary.mode;
      adv1_.q = target.q;
      adv1_.r = target.r;
      adv1_.controlled = controlled;
      adv1_.m = min_confirmations(target.q, target.r, cfg_.adversary.p_values.empty()
                                                          ? 0.01
                                                          : cfg_.adversary.p_values.front())
                    .m;
    }
  }

  SimResult run() {
    const Height margin = cfg_.expiry_margin(max_k_);
    const Height drain_cap = cfg_.drain_cap.value_or(20 * (margin + cfg_.expiry_jitter) + 200);
    for (tick_ = 0;; ++tick_) {
      const bool block_tick = tick_ % cfg_.block_interval == 0;
      if (block_tick) {
        if (block_ >= cfg_.num_blocks) {
          draining_ = true;
          if (!honest_sessions_open()) break;
          if (block_ - cfg_.num_blocks >= drain_cap) break;
        }
        for (auto& node : nodes_) produce(node);
      }
      deliver_due();
      if (block_tick) {
        if (!draining_) sample_gaps();
        ++block_;
      }
    }
    out_.drain_blocks = block_ > cfg_.num_blocks ? block_ - cfg_.num_blocks : 0;
    finish();
    return std::move(out_);
  }

 private:
  // ---- helpers

  bool honest(SystemId s) const { return !nodes_[s.value].adversary; }

  std::size_t branch_index(const Node& node, SystemId requester) const {
    if (node.branches.size() < 2) return 0;
    return cfg_.adversary.branch_of(requester) == Branch::B ? 1 : 0;
  }

  View own_view_for(const Node& node, SystemId requester) const {
    const Chain& c = node.branches[branch_index(node, requester)];
    return generate_view(c, c.config().k, c.config());
  }

  void send(SystemId from, SystemId to, decltype(Envelope::body) body, std::uint64_t extra = 0) {
    const auto spread = static_cast<std::int64_t>(net_rng_.below(2 * cfg_.jitter + 1));
    std::int64_t delay = static_cast<std::int64_t>(cfg_.latency) + spread -
                         static_cast<std::int64_t>(cfg_.jitter);
    delay = std::max<std::int64_t>(delay, 0);
    queue_.push({tick_ + static_cast<std::uint64_t>(delay) + extra, seq_++, from, to, std::move(body)});
  }

  void send_gossip(Node& from, SystemId to, GossipType type,
                   std::variant<ViewList, PullRequest, PullResponse, ConflictEvidence> payload) {
    GossipMessage m;
    m.type = type;
    m.sender = from.id;
    m.tick = tick_;
    m.payload = std::move(payload);
    ++out_.metrics.gossips_sent[from.id.value];
    send(from.id, to, std::move(m));
  }

  void log(json line) { out_.transcript.push_back(line.dump()); }

  void log_transitions(const Node& node, std::uint64_t task, Session& s) {
    const auto& h = s.cbc.history;
    for (; s.logged < h.size(); ++s.logged) {
      json line = transcript_line(tick_, task, node.id, h[s.logged].phase, h[s.logged].height);
      line["type"] = "phase";
      log(std::move(line));
    }
  }

  bool honest_sessions_open() const {
    for (const auto& node : nodes_) {
      if (!node.adversary && !node.sessions.empty()) return true;
    }
    return false;
  }

  // ---- block production

  void produce(Node& node) {
    step_sessions(node);
    if (!draining_ && !node.adversary) draw_tasks(node);
    if (node.adversary && !attacked_ && block_ == cfg_.adversary.attack_block) launch_attack(node);
    if (!node.late_reverses.empty()) {
      for (auto& tx : node.late_reverses) node.branches[0].submit(tx);
      node.late_reverses.clear();
    }
    bool cc = false;
    for (auto& chain : node.branches) {
      for (const auto& tx : chain.staged()) {
        if (tx.kind != TxKind::Local) cc = true;
      }
      chain.seal();
    }
    const Chain& main = node.branches[0];
    View own = generate_view(main, main.config().k, main.config());
    const View* cur = node.view_list.find(node.id);
    if (cur == nullptr || *cur != own) node.view_list.set_own(std::move(own));
    maybe_push(node, cc);
  }

  void maybe_push(Node& node, bool cc) {
    if (!(cc || node.relay_pending || block_ - node.last_push_block >= cfg_.gossip_timer)) return;
    push_now(node);
  }

  void push_now(Node& node) {
    node.last_push_block = block_;
    node.relay_pending = false;
    auto out = push_round(node.id, node.view_list, topo_, cfg_.g, node.rng, tick_);
    for (auto& o : out) {
      auto& list = std::get<ViewList>(o.message.payload);
      if (node.adversary) {
        if (!cfg_.adversary.serves(o.recipient)) continue;
        list.entries[node.id] = own_view_for(node, o.recipient);
      }
      send_gossip(node, o.recipient, GossipType::Push, std::move(list));
    }
  }

  void draw_tasks(Node& node) {
    const auto count = draw_task_count(cfg_.p_c, node.rng);
    for (std::uint64_t c = 0; c < count; ++c) {
      std::vector<SystemId> peers;
      for (const auto& other : nodes_) {
        if (other.id != node.id && !other.adversary) peers.push_back(other.id);
      }
      if (peers.empty()) return;
      const SystemId peer = peers[node.rng.below(peers.size())];
      create_task(node, 0, peer, false, std::nullopt);
    }
  }

  void create_task(Node& init, std::size_t branch, SystemId peer_id, bool adversarial,
                   std::optional<Transaction> fixed_target) {
    Node& peer = nodes_[peer_id.value];
    const std::uint64_t id = out_.tasks.size();
    Chain& ci = init.branches[branch];
    const Chain& cj = peer.branches[0];
    const Height margin =
        cfg_.expiry_margin(std::max(ci.config().k, cj.config().k));
    auto extra = [&] { return cfg_.expiry_jitter ? init.rng.below(cfg_.expiry_jitter + 1) : 0; };

    TaskRecord t;
    t.id = id;
    t.initiator = init.id;
    t.counterparty = peer_id;
    t.adversarial = adversarial;
    t.created_tick = tick_;
    t.h_i = ci.height() + margin + extra();
    t.h_j = cj.height() + margin + extra();

    auto preconds = [&](Node& n) {
      std::vector<HashDigest> pre;
      if (cfg_.dependency_rate > 0.0 && init.rng.bernoulli(cfg_.dependency_rate) && n.last_target) {
        pre.push_back(*n.last_target);
      }
      return pre;
    };
    const std::string tag = "task:" + std::to_string(id);
    t.tx_i = fixed_target ? *fixed_target
                          : Transaction::make(TxKind::Target, tag + ":pay", preconds(init), init.id);
    t.tx_j = Transaction::make(TxKind::Target, tag + ":pay", preconds(peer), peer_id);
    t.rev_i = make_reverse(t.tx_i, "undo");
    t.rev_j = make_reverse(t.tx_j, "undo");
    if (!adversarial) {
      init.last_target = t.tx_i.id;
      peer.last_target = t.tx_j.id;
    }

    ContractTx ctx_i{t.tx_i.id, t.rev_i.id, t.h_i, peer_id, t.tx_j.id, t.rev_j.id, t.h_j};
    const ContractTx ctx_j = derive_counterpart(ctx_i, init.id);
    t.ctx_i = contract_transaction(ctx_i, init.id);
    t.ctx_j = contract_transaction(ctx_j, peer_id);
    out_.tasks.push_back(t);
    if (!adversarial) ++out_.metrics.tasks_started;

    log({{"type", "task"}, {"tick", tick_}, {"task", id}, {"initiator", init.id.value},
         {"counterparty", peer_id.value}, {"h_i", t.h_i}, {"h_j", t.h_j}});

    open_session(init, id, branch, ctx_i, t.tx_i, t.rev_i, margin);
    const std::uint64_t delay =
        cfg_.offer_delay_max && !adversarial ? init.rng.below(cfg_.offer_delay_max + 1) : 0;
    send(init.id, peer_id, OfferMsg{id}, delay);
  }

  void open_session(Node& node, std::uint64_t id, std::size_t branch, const ContractTx& ctx,
                    const Transaction& target, const Transaction& reverse, Height margin) {
    Session s;
    s.cbc = make_session(node.id, ctx, target, reverse, cfg_.poll_interval);
    s.branch = branch;
    s.patience = cfg_.patience.value_or(margin);
    if (node.book.is_byzantine(ctx.peer)) s.cbc.peer_byzantine = true;
    start_session(s.cbc, node.branches[branch]);
    auto [it, inserted] = node.sessions.emplace(id, std::move(s));
    log_transitions(node, id, it->second);
    if (it->second.cbc.phase == Phase::Aborted) node.sessions.erase(it);
  }

  void launch_attack(Node& adv) {
    attacked_ = true;
    const auto& spec = cfg_.adversary;
    const Chain& main = adv.branches[0];
    if (spec.strategy == Strategy::ForkAndDoubleTask || spec.strategy == Strategy::ForgedCheckOnFork) {
      const Height fh = spec.fork_height.value_or(main.height() - 1);
      if (fh >= main.height()) throw ConfigError("fork height beyond tip");
      auto [a, b] = adv2_fork(main, fh);
      adv.branches.clear();
      adv.branches.push_back(std::move(a));
      adv.branches.push_back(std::move(b));
      log({{"type", "fork"}, {"tick", tick_}, {"system", adv.id.value}, {"fork_height", fh}});
    }
    const Transaction spend = Transaction::make(TxKind::Target, "double-spend", {}, adv.id);
    for (SystemId v : spec.victims) {
      const std::size_t br = branch_index(adv, v);
      create_task(adv, br, v, true, spend);
      attack_tasks_.push_back(out_.tasks.size() - 1);
      if (spec.strategy != Strategy::ForkAndDoubleTask) break;
    }
  }

  // ---- sessions

  void send_poll(Node& node, std::uint64_t task, Session& s) {
    CheckRequest req;
    req.hashes.push_back(peer_contract_id(s.cbc));
    req.view = own_view_for(node, s.cbc.ctx.peer);
    req.tick = tick_;
    s.poll_outstanding = true;
    s.last_poll_block = block_;
    ++out_.metrics.requests_sent[node.id.value];
    send(node.id, s.cbc.ctx.peer, CheckReqMsg{task, Purpose::Poll, std::move(req)});
  }

  void send_timeout_query(Node& node, std::uint64_t task, Session& s) {
    CheckRequest req;
    req.hashes = {s.cbc.ctx.remote_tx, s.cbc.ctx.remote_reverse};
    req.view = own_view_for(node, s.cbc.ctx.peer);
    req.tick = tick_;
    s.query_outstanding = true;
    s.last_query_block = block_;
    ++out_.metrics.requests_sent[node.id.value];
    send(node.id, s.cbc.ctx.peer, CheckReqMsg{task, Purpose::Timeout, std::move(req)});
  }

  void step_sessions(Node& node) {
    std::vector<std::uint64_t> done;
    for (auto& [task, s] : node.sessions) {
      Chain& chain = node.branches[s.branch];
      CbcSession& c = s.cbc;
      const bool settled = chain.is_committed(c.contract.id) && !staged_contains(chain, c.target.id);
      if (c.peer_byzantine && settled &&
          (c.phase == Phase::CtxCommitted || c.phase == Phase::TxCommitted ||
           c.phase == Phase::AwaitExpiry)) {
        timeout(c, chain, std::nullopt, std::nullopt);
      }
      reach_expiry(c, chain);
      if (c.phase == Phase::CtxCommitted && !s.poll_outstanding &&
          chain.is_committed(c.contract.id) &&
          (!s.last_poll_block || block_ - *s.last_poll_block >= c.poll_interval)) {
        send_poll(node, task, s);
      }
      if (c.phase == Phase::AwaitExpiry) {
        if (!s.await_since) s.await_since = block_;
        const bool local_done = chain.height() >= c.ctx.local_expiry;
        const bool spaced = !s.last_query_block || block_ - *s.last_query_block >= c.poll_interval;
        if (local_done && !s.query_outstanding && spaced) {
          const bool ready = await_remote_expiry(c, node.view_list) ||
                             block_ - *s.await_since >= s.patience;
          if (ready) send_timeout_query(node, task, s);
        }
      }
      log_transitions(node, task, s);
      if (c.phase == Phase::Finalized || c.phase == Phase::Aborted) done.push_back(task);
    }
    for (auto task : done) finish_session(node, task);
  }

  void finish_session(Node& node, std::uint64_t task) {
    auto it = node.sessions.find(task);
    if (it == node.sessions.end()) return;
    const CbcSession& c = it->second.cbc;
    if (node.adversary && cfg_.adversary.strategy == Strategy::LateCommit &&
        c.phase == Phase::Finalized && !c.reverse_committed &&
        node.branches[0].is_committed(c.target.id)) {
      node.late_reverses.push_back(c.reverse);
      log({{"type", "late-commit"}, {"tick", tick_}, {"task", task}, {"system", node.id.value}});
    }
    node.sessions.erase(it);
  }

  // ---- delivery

  void deliver_due() {
    while (!queue_.empty() && queue_.top().deliver <= tick_) {
      Envelope e = queue_.top();
      queue_.pop();
      deliver(std::move(e));
    }
  }

  void deliver(Envelope&& e) {
    Node& dst = nodes_[e.to.value];
    std::visit(
        [&](auto&& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, OfferMsg>) {
            on_offer(dst, body.task);
          } else if constexpr (std::is_same_v<T, CheckReqMsg>) {
            on_check_request(dst, e.from, body);
          } else if constexpr (std::is_same_v<T, CheckRespMsg>) {
            on_check_response(dst, e.from, body);
          } else {
            on_gossip(dst, e.from, body);
          }
        },
        e.body);
  }

  void on_offer(Node& node, std::uint64_t task) {
    const TaskRecord& t = out_.tasks[task];
    const ContractTx ctx = *contract_of(t.ctx_j);
    const Height margin = cfg_.expiry_margin(
        std::max(registry_[t.initiator.value].k, registry_[t.counterparty.value].k));
    open_session(node, task, branch_index(node, t.initiator), ctx, t.tx_j, t.rev_j, margin);
  }

  void on_check_request(Node& node, SystemId from, CheckReqMsg& msg) {
    if (node.adversary && !cfg_.adversary.serves(from)) return;
    if (!node.adversary && msg.req.view) {
      handle_merge(node, merge_view(node.view_list, from, *msg.req.view, registry_));
    }
    const Chain& chain = node.branches[branch_index(node, from)];
    CheckResponse resp = answer_check(chain, msg.req);
    if (cfg_.adversary.kind == AdversaryKind::Adv1 && node.id == cfg_.adversary.target_system) {
      if (auto forged = adv1_intercept(msg.req, resp, adv1_, adv_rng_)) resp = *forged;
    }
    send(node.id, from, CheckRespMsg{msg.task, msg.purpose, std::move(resp)});
  }

  void on_check_response(Node& node, SystemId from, CheckRespMsg& msg) {
    if (!node.adversary) {
      handle_merge(node, merge_view(node.view_list, from, msg.resp.view, registry_));
    }
    auto it = node.sessions.find(msg.task);
    if (it == node.sessions.end()) return;
    Session& s = it->second;
    CbcSession& c = s.cbc;
    Chain& chain = node.branches[s.branch];
    if (msg.purpose == Purpose::Poll) {
      s.poll_outstanding = false;
      if (c.phase == Phase::CtxCommitted && !msg.resp.results.empty()) {
        on_poll_result(c, chain, msg.resp.results[0]);
      }
    } else {
      s.query_outstanding = false;
      // The decision must rest on a peer state past the remote expiry.
      if (c.phase == Phase::AwaitExpiry && !c.peer_byzantine && msg.resp.results.size() == 2 &&
          msg.resp.view.height >= c.ctx.remote_expiry) {
        timeout(c, chain, msg.resp.results[0], msg.resp.results[1]);
      }
    }
    log_transitions(node, msg.task, s);
  }

  void on_gossip(Node& node, SystemId from, GossipMessage& m) {
    if (node.adversary) {
      if (m.type == GossipType::PullReq && cfg_.adversary.serves(from)) answer_pull_req(node, from, m);
      return;
    }
    switch (m.type) {
      case GossipType::Push:
        handle_merge(node, merge(node.view_list, std::get<ViewList>(m.payload), registry_));
        break;
      case GossipType::PullReq:
        answer_pull_req(node, from, m);
        break;
      case GossipType::PullResp: {
        const auto& resp = std::get<PullResponse>(m.payload);
        std::optional<View> candidate;
        auto it = node.pulls.find(resp.system);
        if (it != node.pulls.end()) {
          candidate = it->second.candidate;
          node.pulls.erase(it);
        }
        handle_merge(node, apply_pull(node.view_list, resp, candidate, registry_));
        break;
      }
      case GossipType::Evidence:
        process_evidence(node, std::get<ConflictEvidence>(m.payload), false);
        break;
    }
  }

  void answer_pull_req(Node& node, SystemId from, const GossipMessage& m) {
    const auto& req = std::get<PullRequest>(m.payload);
    if (req.system != node.id) return;
    const Chain& chain = node.branches[branch_index(node, from)];
    send_gossip(node, from, GossipType::PullResp, answer_pull(chain, req));
  }

  void handle_merge(Node& node, MergeResult r) {
    out_.metrics.invalid_proofs += r.invalid_proofs;
    // Forward as soon as the list learned something new.
    if (r.updated && cfg_.relay_on_update) push_now(node);
    for (auto& need : r.pulls) {
      auto it = node.pulls.find(need.system);
      if (it != node.pulls.end() && block_ - it->second.sent_block < 4) continue;
      const View* have = node.view_list.find(need.system);
      PullRequest req{need.system, have ? have->length() : 0, need.candidate.length()};
      node.pulls[need.system] = {std::move(need.candidate), block_};
      ++out_.metrics.pulls_sent;
      send_gossip(node, req.system, GossipType::PullReq, req);
    }
    for (const auto& ev : r.conflicts) {
      if (!node.book.is_byzantine(ev.accused)) process_evidence(node, ev, true);
    }
  }

  void process_evidence(Node& node, const ConflictEvidence& ev, bool generated) {
    std::vector<CbcSession*> sessions;
    for (auto& [task, s] : node.sessions) sessions.push_back(&s.cbc);
    const EvidenceEffects fx = handle_evidence(ev, node.book, registry_, sessions);
    if (fx.bogus || !fx.accepted) return;
    if (generated) {
      ++out_.metrics.conflicts_detected;
      if (!detection_tick_) detection_tick_ = tick_;
      log({{"type", "conflict"}, {"tick", tick_}, {"accused", ev.accused.value},
           {"reporter", node.id.value}, {"height_a", ev.view_a.height},
           {"height_b", ev.view_b.height}});
    }
    if (fx.newly_accused) {
      log({{"type", "blacklist"}, {"tick", tick_}, {"system", node.id.value},
           {"accused", ev.accused.value}, {"sessions_cancelled", fx.sessions_cancelled}});
    }
    if (fx.rebroadcast) {
      for (SystemId nb : topo_.neighbors(node.id)) {
        if (nb == ev.accused) continue;
        send_gossip(node, nb, GossipType::Evidence, ev);
      }
    }
  }

  // ---- measurement

  void sample_gaps() {
    std::vector<ViewList> lists;
    std::vector<Height> truth;
    std::vector<bool> mask;
    lists.reserve(nodes_.size());
    for (const auto& node : nodes_) {
      lists.push_back(node.view_list);
      const Height m = node.branches[0].finalized_length();
      truth.push_back(m ? m - 1 : 0);
      mask.push_back(!node.adversary);
    }
    for (const auto& rec : sample_gap(lists, truth, tick_, mask)) {
      ++out_.metrics.gap_histogram[rec.gap];
      if (cfg_.record_gap_samples) out_.metrics.gap_samples.push_back(rec);
    }
  }

  void finish() {
    auto& m = out_.metrics;
    for (const auto& node : nodes_) {
      if (node.adversary) continue;
      for (const auto& [task, s] : node.sessions) {
        out_.violations.push_back("session " + std::to_string(task) + " on system " +
                                  std::to_string(node.id.value) + " unfinished in phase " +
                                  std::string(to_string(s.cbc.phase)));
      }
    }
    for (const auto& node : nodes_) out_.chains.push_back(node.branches[0]);
    for (const auto& node : nodes_) {
      if (node.branches.size() > 1) out_.adversary_branch_b = node.branches[1];
    }

    for (const auto& t : out_.tasks) {
      if (t.adversarial) continue;
      const SideState si = side_state(out_.chains[t.initiator.value], t.ctx_i, t.tx_i, t.rev_i);
      const SideState sj = side_state(out_.chains[t.counterparty.value], t.ctx_j, t.tx_j, t.rev_j);
      switch (classify_task(si, sj)) {
        case TaskOutcome::Succeeded: ++m.tasks_succeeded; break;
        case TaskOutcome::Reversed: ++m.tasks_reversed; break;
        case TaskOutcome::Aborted: ++m.tasks_aborted; break;
        case TaskOutcome::Partial:
          out_.violations.push_back("atomicity violated by task " + std::to_string(t.id));
          break;
      }
    }
    if (m.tasks_started != m.tasks_succeeded + m.tasks_reversed + m.tasks_aborted &&
        out_.violations.empty()) {
      out_.violations.push_back("task outcome counters do not add up");
    }

    auto& rep = out_.attack;
    rep.detection_tick = detection_tick_;
    rep.detected = detection_tick_.has_value();
    rep.evidence_count = m.conflicts_detected;
    if (cfg_.adversary.kind == AdversaryKind::Adv2) {
      std::size_t completed = 0;
      for (auto idx : attack_tasks_) {
        const TaskRecord& t = out_.tasks[idx];
        const Node& victim = nodes_[t.counterparty.value];
        VictimOutcome vo;
        vo.system = victim.id;
        const SideState s = side_state(victim.branches[0], t.ctx_j, t.tx_j, t.rev_j);
        if (victim.sessions.contains(t.id)) {
          vo.outcome = "unfinished";
        } else if (s.reverse) {
          vo.outcome = "reversed";
        } else if (s.target) {
          vo.outcome = "completed";
          ++completed;
        } else {
          vo.outcome = "aborted";
        }
        const Height boot = registry_[victim.id.value].t + 2;
        vo.expiry_tick = (t.h_j > boot ? t.h_j - boot : 0) * cfg_.block_interval;
        vo.peer_flagged = victim.book.is_byzantine(t.initiator);
        if (!rep.later_victim_expiry_tick || *vo.expiry_tick > *rep.later_victim_expiry_tick) {
          rep.later_victim_expiry_tick = vo.expiry_tick;
        }
        if (vo.outcome == "reversed" || vo.outcome == "aborted") rep.some_victim_protected = true;
        rep.victims.push_back(vo);
      }
      rep.double_completion = attack_tasks_.size() >= 2 && completed == attack_tasks_.size();
      rep.detected_before_expiry = rep.detected && rep.later_victim_expiry_tick &&
                                   *rep.detection_tick < *rep.later_victim_expiry_tick;
      rep.audit = audit_late_commits(out_.tasks, out_.chains);
    } else if (cfg_.adversary.kind == AdversaryKind::Adv1) {
      const auto& target = registry_.at(cfg_.adversary.target_system.value);
      for (std::size_t i = 0; i < cfg_.adversary.p_values.size(); ++i) {
        rep.adv1.push_back(adv1_monte_carlo(target.q, target.r, cfg_.adversary.p_values[i],
                                            cfg_.adversary.requests, cfg_.adversary.mode,
                                            cfg_.seed + i));
      }
    }
  }

  SimConfig cfg_;
  Registry registry_;
  Topology topo_;
  std::vector<Node> nodes_;
  Rng net_rng_;
  Rng adv_rng_;
  Adv1Params adv1_;
  std::uint32_t max_k_ = 0;
  std::priority_queue<Envelope, std::vector<Envelope>, Later> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t tick_ = 0;
  Height block_ = 0;
  bool draining_ = false;
  bool attacked_ = false;
  std::vector<std::size_t> attack_tasks_;
  std::optional<std::uint64_t> detection_tick_;
  SimResult out_;
};

}  // namespace

SimResult run(SimConfig config) {
  config.finalize();
  config.validate();
  Engine engine(std::move(config));
  return engine.run();
}

}  // namespace xchain
