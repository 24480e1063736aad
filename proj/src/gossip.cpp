#include "xchain/gossip.hpp"

#include <algorithm>
#include <deque>

#include "xchain/cbc.hpp"

namespace xchain {

using nlohmann::json;

const View* ViewList::find(SystemId s) const {
  auto it = entries.find(s);
  return it == entries.end() ? nullptr : &it->second;
}

void ViewList::set_own(View v) {
  entries[owner] = std::move(v);
  ++version;
}

std::size_t ViewList::digest_count() const {
  std::size_t n = 0;
  for (const auto& [s, v] : entries) n += 1 + v.recent.size();
  return n;
}

namespace {

Height split_of(Height length, std::uint32_t k) { return length > k ? length - k : 0; }

bool well_formed(const View& v, std::uint32_t k) {
  const Height m = v.length();
  return v.recent.size() == m - split_of(m, k);
}

}  // namespace

Extension classify_extension(const View& prev, const View& next, std::uint32_t k,
                             std::span<const HashDigest> bridge) {
  if (!well_formed(prev, k) || !well_formed(next, k)) return Extension::Conflict;
  if (next.height < prev.height) {
    // Only used for ordering checks; a shorter view must be a prefix.
    return classify_extension(next, prev, k) == Extension::Conflict ? Extension::Conflict
                                                                   : Extension::Extends;
  }
  const Height m = prev.length();
  const Height a = split_of(m, k);
  const Height known_end = m + bridge.size();
  auto known = [&](Height h) -> const HashDigest& {
    return h < m ? prev.recent[h - a] : bridge[h - m];
  };

  const Height m2 = next.length();
  const Height a2 = split_of(m2, k);
  if (a2 > known_end) return Extension::GapTooLarge;

  HashDigest agg = prev.aggregate;
  for (Height h = a; h < a2; ++h) agg = hash_pair(agg, known(h));
  if (agg != next.aggregate) return Extension::Conflict;

  const Height overlap_end = std::min(known_end, m2);
  for (Height h = a2; h < overlap_end; ++h) {
    if (known(h) != next.recent[h - a2]) return Extension::Conflict;
  }
  return Extension::Extends;
}

bool can_extend(const View& old, const View& next, std::uint32_t k) {
  return next.height >= old.height && classify_extension(old, next, k) == Extension::Extends;
}

bool irreconcilable(const View& a, const View& b, std::uint32_t k) {
  const View& lo = a.height <= b.height ? a : b;
  const View& hi = a.height <= b.height ? b : a;
  return classify_extension(lo, hi, k) == Extension::Conflict;
}

namespace {

const SystemConfig* config_for(const Registry& systems, SystemId s) {
  if (s.value >= systems.size()) return nullptr;
  return &systems[s.value];
}

bool acceptable(const View& v, const SystemConfig& cfg) {
  return proof_is_valid(v.proof, cfg.q, cfg.r) && well_formed(v, cfg.k);
}

void merge_one(ViewList& local, SystemId s, const View& incoming, const Registry& systems,
               MergeResult& out) {
  if (s == local.owner) return;
  const SystemConfig* cfg = config_for(systems, s);
  if (cfg == nullptr || !acceptable(incoming, *cfg)) {
    ++out.invalid_proofs;
    return;
  }
  auto it = local.entries.find(s);
  if (it == local.entries.end()) {
    local.entries.emplace(s, incoming);
    ++local.version;
    out.updated = true;
    return;
  }
  const View& old = it->second;
  if (old == incoming) return;
  if (incoming.height > old.height) {
    switch (classify_extension(old, incoming, cfg->k)) {
      case Extension::Extends:
        it->second = incoming;
        ++local.version;
        out.updated = true;
        return;
      case Extension::Conflict:
        out.conflicts.push_back({s, old, incoming, local.owner});
        return;
      case Extension::GapTooLarge:
        out.pulls.push_back({s, incoming});
        return;
    }
    return;
  }
  if (irreconcilable(incoming, old, cfg->k)) {
    out.conflicts.push_back({s, old, incoming, local.owner});
  }
}

void append(MergeResult& into, MergeResult&& from) {
  into.updated = into.updated || from.updated;
  into.invalid_proofs += from.invalid_proofs;
  for (auto& p : from.pulls) into.pulls.push_back(std::move(p));
  for (auto& c : from.conflicts) into.conflicts.push_back(std::move(c));
}

}  // namespace

MergeResult merge(ViewList& local, const ViewList& incoming, const Registry& systems) {
  MergeResult out;
  for (const auto& [s, v] : incoming.entries) merge_one(local, s, v, systems, out);
  return out;
}

MergeResult merge_view(ViewList& local, SystemId system, const View& view,
                       const Registry& systems) {
  MergeResult out;
  merge_one(local, system, view, systems, out);
  return out;
}

Topology Topology::full_mesh(std::size_t n) {
  Topology t;
  t.adjacency_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) t.adjacency_[i].push_back(SystemId(static_cast<std::uint16_t>(j)));
    }
  }
  return t;
}

Topology Topology::from_edges(std::size_t n,
                              std::span<const std::pair<SystemId, SystemId>> edges) {
  Topology t;
  t.adjacency_.resize(n);
  for (const auto& [a, b] : edges) {
    if (a.value >= n || b.value >= n) throw std::invalid_argument("edge endpoint out of range");
    if (a == b) throw std::invalid_argument("self loop in topology");
    t.adjacency_[a.value].push_back(b);
    t.adjacency_[b.value].push_back(a);
  }
  for (auto& adj : t.adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return t;
}

bool Topology::connected() const {
  if (adjacency_.empty()) return true;
  std::vector<bool> seen(adjacency_.size(), false);
  std::deque<std::uint16_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    auto u = queue.front();
    queue.pop_front();
    for (auto v : adjacency_[u]) {
      if (!seen[v.value]) {
        seen[v.value] = true;
        ++count;
        queue.push_back(v.value);
      }
    }
  }
  return count == adjacency_.size();
}

std::vector<std::pair<SystemId, SystemId>> Topology::edges() const {
  std::vector<std::pair<SystemId, SystemId>> out;
  for (std::size_t i = 0; i < adjacency_.size(); ++i) {
    for (auto v : adjacency_[i]) {
      if (i < v.value) out.emplace_back(SystemId(static_cast<std::uint16_t>(i)), v);
    }
  }
  return out;
}

PullResponse answer_pull(const Chain& chain, const PullRequest& request) {
  const std::uint32_t k = chain.config().k;
  const Height m_now = chain.finalized_length();
  if (m_now == 0) throw EmptyChain("no finalized block");
  const Height from = std::min(request.from_length, m_now);
  Height target = std::max(request.to_length, from);
  target = std::min({target, from + static_cast<Height>(kPullSpanFactor) * k, m_now});
  target = std::max<Height>(target, 1);

  PullResponse resp;
  resp.system = chain.config().id;
  resp.view = view_at(chain, k, target);
  const Height bridge_end = split_of(target, k);
  resp.bridge_start = from;
  for (Height h = from; h < bridge_end; ++h) resp.bridge.push_back(chain.header_hash_at(h));
  return resp;
}

MergeResult apply_pull(ViewList& local, const PullResponse& response,
                       const std::optional<View>& candidate, const Registry& systems) {
  MergeResult out;
  const SystemId s = response.system;
  const SystemConfig* cfg = config_for(systems, s);
  if (s == local.owner) return out;
  if (cfg == nullptr || !acceptable(response.view, *cfg)) {
    ++out.invalid_proofs;
    return out;
  }
  auto it = local.entries.find(s);
  if (it == local.entries.end()) {
    local.entries.emplace(s, response.view);
    ++local.version;
    out.updated = true;
  } else if (response.view.height > it->second.height &&
             response.bridge_start <= it->second.length()) {
    // The entry may have advanced while the pull was in flight.
    std::span<const HashDigest> bridge(response.bridge);
    const Height skip = it->second.length() - response.bridge_start;
    bridge = skip < bridge.size() ? bridge.subspan(skip) : std::span<const HashDigest>{};
    switch (classify_extension(it->second, response.view, cfg->k, bridge)) {
      case Extension::Extends:
        it->second = response.view;
        ++local.version;
        out.updated = true;
        break;
      case Extension::Conflict:
        out.conflicts.push_back({s, it->second, response.view, local.owner});
        break;
      case Extension::GapTooLarge:
        break;
    }
  } else if (irreconcilable(it->second, response.view, cfg->k)) {
    out.conflicts.push_back({s, it->second, response.view, local.owner});
  }
  if (candidate) append(out, merge_view(local, s, *candidate, systems));
  return out;
}

std::vector<Outgoing> push_round(SystemId self, const ViewList& view_list,
                                 const Topology& peers, double g, Rng& rng,
                                 std::uint64_t tick) {
  std::vector<Outgoing> out;
  for (SystemId nb : peers.neighbors(self)) {
    if (!rng.bernoulli(g)) continue;
    GossipMessage m;
    m.type = GossipType::Push;
    m.sender = self;
    m.tick = tick;
    m.payload = view_list;
    out.push_back({nb, std::move(m)});
  }
  return out;
}

bool validate_evidence(const ConflictEvidence& evidence, const Registry& systems) {
  const SystemConfig* cfg = config_for(systems, evidence.accused);
  if (cfg == nullptr) return false;
  if (!acceptable(evidence.view_a, *cfg) || !acceptable(evidence.view_b, *cfg)) return false;
  return irreconcilable(evidence.view_a, evidence.view_b, cfg->k);
}

EvidenceEffects handle_evidence(const ConflictEvidence& evidence, EvidenceBook& book,
                                const Registry& systems, std::span<CbcSession* const> sessions) {
  EvidenceEffects fx;
  if (!validate_evidence(evidence, systems)) {
    book.flagged_reporters.insert(evidence.reporter);
    fx.bogus = true;
    return fx;
  }
  if (std::find(book.accepted.begin(), book.accepted.end(), evidence) != book.accepted.end()) {
    return fx;
  }
  book.accepted.push_back(evidence);
  fx.accepted = true;
  if (book.byzantine.insert(evidence.accused).second) {
    fx.newly_accused = true;
    fx.rebroadcast = true;
  }
  for (CbcSession* s : sessions) {
    if (s != nullptr && s->ctx.peer == evidence.accused && !s->peer_byzantine) {
      s->peer_byzantine = true;
      ++fx.sessions_cancelled;
    }
  }
  return fx;
}

std::string_view to_string(GossipType t) {
  switch (t) {
    case GossipType::Push: return "push";
    case GossipType::PullReq: return "pull-req";
    case GossipType::PullResp: return "pull-resp";
    case GossipType::Evidence: return "evidence";
  }
  return "unknown";
}

namespace {

HashDigest digest_json(const json& j) {
  auto d = HashDigest::from_hex(j.get<std::string>());
  if (!d) throw DecodeError("bad digest");
  return *d;
}

json evidence_json(const ConflictEvidence& e) {
  return {{"accused", e.accused.value},
          {"reporter", e.reporter.value},
          {"view_a", view_to_json(e.view_a)},
          {"view_b", view_to_json(e.view_b)}};
}

SystemId sys(const json& j) { return SystemId(j.get<std::uint16_t>()); }

}  // namespace

json to_json(const ViewList& vl) {
  json entries = json::array();
  for (const auto& [s, v] : vl.entries) entries.push_back({{"system", s.value}, {"view", view_to_json(v)}});
  return {{"owner", vl.owner.value}, {"version", vl.version}, {"entries", std::move(entries)}};
}

ViewList view_list_from_json(const json& j) {
  ViewList vl;
  vl.owner = sys(j.at("owner"));
  vl.version = j.at("version").get<std::uint64_t>();
  for (const auto& e : j.at("entries")) vl.entries[sys(e.at("system"))] = view_from_json(e.at("view"));
  return vl;
}

json to_json(const GossipMessage& m) {
  json payload;
  switch (m.type) {
    case GossipType::Push:
      payload = to_json(std::get<ViewList>(m.payload));
      break;
    case GossipType::PullReq: {
      const auto& r = std::get<PullRequest>(m.payload);
      payload = {{"system", r.system.value}, {"from_length", r.from_length}, {"to_length", r.to_length}};
      break;
    }
    case GossipType::PullResp: {
      const auto& r = std::get<PullResponse>(m.payload);
      json bridge = json::array();
      for (const auto& h : r.bridge) bridge.push_back(h.hex());
      payload = {{"system", r.system.value}, {"view", view_to_json(r.view)},
                 {"bridge_start", r.bridge_start}, {"bridge", std::move(bridge)}};
      break;
    }
    case GossipType::Evidence:
      payload = evidence_json(std::get<ConflictEvidence>(m.payload));
      break;
  }
  return {{"type", to_string(m.type)}, {"sender", m.sender.value}, {"tick", m.tick},
          {"payload", std::move(payload)}};
}

GossipMessage gossip_from_json(const json& j) {
  GossipMessage m;
  const auto type = j.at("type").get<std::string>();
  m.sender = sys(j.at("sender"));
  m.tick = j.at("tick").get<std::uint64_t>();
  const json& p = j.at("payload");
  if (type == "push") {
    m.type = GossipType::Push;
    m.payload = view_list_from_json(p);
  } else if (type == "pull-req") {
    m.type = GossipType::PullReq;
    m.payload = PullRequest{sys(p.at("system")), p.at("from_length").get<Height>(),
                            p.at("to_length").get<Height>()};
  } else if (type == "pull-resp") {
    m.type = GossipType::PullResp;
    PullResponse r;
    r.system = sys(p.at("system"));
    r.view = view_from_json(p.at("view"));
    r.bridge_start = p.at("bridge_start").get<Height>();
    for (const auto& h : p.at("bridge")) r.bridge.push_back(digest_json(h));
    m.payload = std::move(r);
  } else if (type == "evidence") {
    m.type = GossipType::Evidence;
    m.payload = ConflictEvidence{sys(p.at("accused")), view_from_json(p.at("view_a")),
                                 view_from_json(p.at("view_b")), sys(p.at("reporter"))};
  } else {
    throw DecodeError("unknown gossip type: " + type);
  }
  return m;
}

}  // namespace xchain
