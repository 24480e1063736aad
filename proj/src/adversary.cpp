#include "xchain/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace xchain {

using nlohmann::json;

std::string_view to_string(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::None: return "none";
    case AdversaryKind::Adv1: return "adv1";
    case AdversaryKind::Adv2: return "adv2";
  }
  return "unknown";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ForgeCheckResponse: return "forge-check-response";
    case Strategy::ForkAndDoubleTask: return "fork-and-double-task";
    case Strategy::LateCommit: return "late-commit";
    case Strategy::ForgedCheckOnFork: return "forged-check-on-fork";
  }
  return "unknown";
}

std::optional<AdversaryKind> adversary_kind_from_string(std::string_view s) {
  for (auto k : {AdversaryKind::None, AdversaryKind::Adv1, AdversaryKind::Adv2}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<Strategy> strategy_from_string(std::string_view s) {
  for (auto k : {Strategy::ForgeCheckResponse, Strategy::ForkAndDoubleTask, Strategy::LateCommit,
                 Strategy::ForgedCheckOnFork}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

Branch AdversarySpec::branch_of(SystemId s) const {
  auto it = branches.find(s);
  return it == branches.end() ? default_branch : it->second;
}

bool AdversarySpec::serves(SystemId s) const {
  if (!silent_to_others) return true;
  return std::find(victims.begin(), victims.end(), s) != victims.end();
}

void AdversarySpec::validate(const std::vector<SystemConfig>& systems) const {
  if (kind == AdversaryKind::None) return;
  if (kind == AdversaryKind::Adv1) {
    for (const auto& [s, frac] : controlled) {
      if (s.value >= systems.size()) throw std::invalid_argument("adv1: unknown system");
      const auto& c = systems[s.value];
      if (frac < 0.0 || frac * c.q >= c.r) {
        throw std::invalid_argument("adv1: controlled fraction must stay below r/q");
      }
    }
    for (double p : p_values) {
      if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("adv1: p values must lie in (0, 1)");
    }
    return;
  }
  if (target_system.value >= systems.size()) throw std::invalid_argument("adv2: unknown target");
  for (auto v : victims) {
    if (v.value >= systems.size()) throw std::invalid_argument("adv2: unknown victim");
    if (v == target_system) throw std::invalid_argument("adv2: target cannot be a victim");
  }
  const std::size_t needed = strategy == Strategy::ForkAndDoubleTask ? 2 : 1;
  if (victims.size() < needed) throw std::invalid_argument("adv2: not enough victims");
}

json to_json(const AdversarySpec& spec) {
  json j = {{"kind", to_string(spec.kind)}};
  if (spec.kind == AdversaryKind::None) return j;
  j["strategy"] = to_string(spec.strategy);
  if (spec.kind == AdversaryKind::Adv1) {
    json controlled = json::object();
    for (const auto& [s, f] : spec.controlled) controlled[std::to_string(s.value)] = f;
    j["controlled"] = controlled;
    j["mode"] = to_string(spec.mode);
    j["p_values"] = spec.p_values;
    j["requests"] = spec.requests;
    return j;
  }
  j["target_system"] = spec.target_system.value;
  json victims = json::array();
  for (auto v : spec.victims) victims.push_back(v.value);
  j["victims"] = victims;
  json branches = json::object();
  for (const auto& [s, b] : spec.branches) branches[std::to_string(s.value)] = std::string(1, static_cast<char>(b));
  j["branches"] = branches;
  j["default_branch"] = std::string(1, static_cast<char>(spec.default_branch));
  j["silent_to_others"] = spec.silent_to_others;
  j["fork_height"] = spec.fork_height ? json(*spec.fork_height) : json(nullptr);
  j["attack_block"] = spec.attack_block;
  return j;
}

namespace {

Branch branch_from_json(const json& j) {
  const auto s = j.get<std::string>();
  if (s == "A") return Branch::A;
  if (s == "B") return Branch::B;
  throw std::invalid_argument("branch must be \"A\" or \"B\"");
}

SystemId system_key(const std::string& key) {
  std::size_t pos = 0;
  const unsigned long v = std::stoul(key, &pos);
  if (pos != key.size() || v > UINT16_MAX) throw std::invalid_argument("bad system id: " + key);
  return SystemId(static_cast<std::uint16_t>(v));
}

}  // namespace

AdversarySpec adversary_from_json(const json& j) {
  static const std::set<std::string> known = {
      "kind",     "strategy",       "controlled",       "mode",        "p_values",
      "requests", "target_system",  "victims",          "branches",    "default_branch",
      "silent_to_others", "fork_height", "attack_block"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown adversary field: " + key);
  }
  AdversarySpec spec;
  auto kind = adversary_kind_from_string(j.value("kind", "none"));
  if (!kind) throw std::invalid_argument("unknown adversary kind");
  spec.kind = *kind;
  if (spec.kind == AdversaryKind::None) return spec;

  const std::string default_strategy = spec.kind == AdversaryKind::Adv1
                                           ? "forge-check-response"
                                           : "fork-and-double-task";
  auto strategy = strategy_from_string(j.value("strategy", default_strategy));
  if (!strategy) throw std::invalid_argument("unknown adversary strategy");
  spec.strategy = *strategy;

  if (j.contains("controlled")) {
    for (const auto& [key, value] : j.at("controlled").items()) {
      spec.controlled[system_key(key)] = value.get<double>();
    }
  }
  if (j.contains("mode")) {
    auto mode = channel_mode_from_string(j.at("mode").get<std::string>());
    if (!mode) throw std::invalid_argument("unknown channel mode");
    spec.mode = *mode;
  }
  if (j.contains("p_values")) spec.p_values = j.at("p_values").get<std::vector<double>>();
  if (j.contains("requests")) spec.requests = j.at("requests").get<std::uint64_t>();

  if (j.contains("target_system")) spec.target_system = SystemId(j.at("target_system").get<std::uint16_t>());
  if (j.contains("victims")) {
    for (const auto& v : j.at("victims")) spec.victims.emplace_back(v.get<std::uint16_t>());
  }
  if (j.contains("branches")) {
    for (const auto& [key, value] : j.at("branches").items()) {
      spec.branches[system_key(key)] = branch_from_json(value);
    }
  }
  if (j.contains("default_branch")) spec.default_branch = branch_from_json(j.at("default_branch"));
  spec.silent_to_others = j.value("silent_to_others", spec.silent_to_others);
  if (j.contains("fork_height") && !j.at("fork_height").is_null()) {
    spec.fork_height = j.at("fork_height").get<Height>();
  }
  spec.attack_block = j.value("attack_block", spec.attack_block);
  return spec;
}

bool sample_all_controlled(std::uint32_t q, std::uint32_t controlled, std::uint32_t m, Rng& rng) {
  if (m > q) return false;
  if (controlled < m) return false;
  // Partial Fisher-Yates over node ids; nodes [0, controlled) are the adversary's.
  std::vector<std::uint32_t> nodes(q);
  std::iota(nodes.begin(), nodes.end(), 0u);
  for (std::uint32_t i = 0; i < m; ++i) {
    const auto pick = i + static_cast<std::uint32_t>(rng.below(q - i));
    std::swap(nodes[i], nodes[pick]);
    if (nodes[i] >= controlled) return false;
  }
  return true;
}

std::optional<CheckResponse> adv1_intercept(const CheckRequest& request,
                                            const CheckResponse& honest,
                                            const Adv1Params& params, Rng& rng) {
  (void)request;
  if (params.controlled == 0) return std::nullopt;
  // Only sampled confirmation can be fooled: every other mode needs r
  // signatures or a block proof the adversary cannot produce.
  if (params.mode != ChannelMode::PermissionedSampled) return std::nullopt;
  if (!sample_all_controlled(params.q, params.controlled, params.m, rng)) return std::nullopt;
  CheckResponse forged = honest;
  for (auto& r : forged.results) r = r ? std::nullopt : std::optional<Height>(honest.view.height);
  forged.view.proof.clear();
  for (std::uint32_t i = 0; i < params.controlled; ++i) {
    forged.view.proof.push_back(static_cast<NodeId>(i));
  }
  forged.forged = true;
  return forged;
}

RequestChannel::Interceptor make_adv1_interceptor(Adv1Params params, Rng& rng) {
  return [params, &rng](const CheckRequest& req, const CheckResponse& honest) {
    return adv1_intercept(req, honest, params, rng);
  };
}

Adv1Report adv1_monte_carlo(std::uint32_t q, std::uint32_t r, double p, std::uint64_t trials,
                            ChannelMode mode, std::uint64_t seed) {
  Adv1Report rep;
  rep.p = p;
  rep.q = q;
  rep.r = r;
  rep.controlled = r - 1;
  rep.m = min_confirmations(q, r, p).m;
  rep.trials = trials;
  rep.bound = all_in_group_probability(q, rep.controlled, rep.m);
  rep.sigma = trials ? std::sqrt(p * (1.0 - p) / static_cast<double>(trials)) : 0.0;

  Adv1Params params{mode, q, r, rep.controlled, rep.m};
  Rng rng(seed);
  RequestChannel channel;
  channel.mode = mode;
  channel.p_fail_target = p;
  channel.responder = [](const CheckRequest& req) {
    CheckResponse resp;
    resp.results.assign(req.hashes.size(), std::nullopt);
    resp.tick = req.tick;
    return std::optional<CheckResponse>(resp);
  };
  channel.interceptor = make_adv1_interceptor(params, rng);
  CheckRequest req;
  req.hashes.push_back(hash_bytes("absent"));
  for (std::uint64_t i = 0; i < trials; ++i) {
    if (send_check(channel, req).forged) ++rep.forged;
  }
  rep.rate = trials ? static_cast<double>(rep.forged) / static_cast<double>(trials) : 0.0;
  return rep;
}

json to_json(const Adv1Report& r) {
  return {{"p", r.p},         {"q", r.q},         {"r", r.r},         {"controlled", r.controlled},
          {"m", r.m},         {"trials", r.trials}, {"forged", r.forged}, {"rate", r.rate},
          {"bound", r.bound}, {"sigma", r.sigma},
          {"within_bound", r.rate <= r.p + 3.0 * r.sigma}};
}

std::pair<Chain, Chain> adv2_fork(const Chain& chain, Height fork_height) {
  if (fork_height >= chain.height()) throw std::out_of_range("fork height beyond tip");
  Chain a = chain.prefix(fork_height + 1);
  Chain b = chain.prefix(fork_height + 1);
  const SystemId self = chain.config().id;
  a.commit({Transaction::make(TxKind::Local, "branch-A@" + std::to_string(fork_height), {}, self)});
  b.commit({Transaction::make(TxKind::Local, "branch-B@" + std::to_string(fork_height), {}, self)});
  for (Height i = 0; i <= chain.config().t; ++i) {
    a.seal();
    b.seal();
  }
  return {std::move(a), std::move(b)};
}

AdversarySpec adv2_double_task(SystemId adv_system, SystemId victim_i, SystemId victim_k) {
  AdversarySpec spec;
  spec.kind = AdversaryKind::Adv2;
  spec.strategy = Strategy::ForkAndDoubleTask;
  spec.target_system = adv_system;
  spec.victims = {victim_i, victim_k};
  spec.branches = {{victim_i, Branch::A}, {victim_k, Branch::B}};
  spec.silent_to_others = true;
  return spec;
}

}  // namespace xchain
