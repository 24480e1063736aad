#pragma once

#include <map>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xchain/chain.hpp"
#include "xchain/channel.hpp"
#include "xchain/rng.hpp"
#include "xchain/types.hpp"

namespace xchain {

enum class AdversaryKind { None, Adv1, Adv2 };

enum class Strategy { ForgeCheckResponse, ForkAndDoubleTask, LateCommit, ForgedCheckOnFork };

std::string_view to_string(AdversaryKind k);
std::string_view to_string(Strategy s);
std::optional<AdversaryKind> adversary_kind_from_string(std::string_view s);
std::optional<Strategy> strategy_from_string(std::string_view s);

enum class Branch : char { A = 'A', B = 'B' };

struct AdversarySpec {
  AdversaryKind kind = AdversaryKind::None;
  Strategy strategy = Strategy::ForgeCheckResponse;

  /// Adv1: fraction of nodes held in each system.
  std::map<SystemId, double> controlled;

  /// Adv2: the fully corrupted system and how it treats everyone else.
  SystemId target_system{1};
  std::vector<SystemId> victims;
  std::map<SystemId, Branch> branches;
  Branch default_branch = Branch::B;
  /// When set the adversary never talks to systems outside `victims`.
  bool silent_to_others = true;
  /// Fork point; unset means the tip at attack time.
  std::optional<Height> fork_height;
  /// Block at which the attack starts.
  Height attack_block = 20;

  /// Adv1 Monte Carlo parameters.
  ChannelMode mode = ChannelMode::PermissionedSampled;
  std::vector<double> p_values{0.01, 0.001};
  std::uint64_t requests = 100000;

  bool active() const { return kind != AdversaryKind::None; }
  Branch branch_of(SystemId s) const;
  bool serves(SystemId s) const;

  /// Throws std::invalid_argument. Adv1 must stay below r/q everywhere.
  void validate(const std::vector<SystemConfig>& systems) const;
};

nlohmann::json to_json(const AdversarySpec& spec);
AdversarySpec adversary_from_json(const nlohmann::json& j);

/// One hypergeometric draw: m distinct confirmers out of q nodes, true iff all
/// of them fall among the first `controlled` nodes.
bool sample_all_controlled(std::uint32_t q, std::uint32_t controlled, std::uint32_t m, Rng& rng);

struct Adv1Params {
  ChannelMode mode = ChannelMode::PermissionedSampled;
  std::uint32_t q = 4;
  std::uint32_t r = 3;
  std::uint32_t controlled = 0;
  std::uint32_t m = 1;
};

/// Forged response (every hash reported present, proof signed by the
/// controlled nodes only) when the forgery gets past the requester's
/// confirmation sampling; nullopt means the honest answer passes.
std::optional<CheckResponse> adv1_intercept(const CheckRequest& request,
                                            const CheckResponse& honest,
                                            const Adv1Params& params, Rng& rng);

/// Channel hook bound to a generator owned by the caller.
RequestChannel::Interceptor make_adv1_interceptor(Adv1Params params, Rng& rng);

struct Adv1Report {
  double p = 0.0;
  std::uint32_t q = 0;
  std::uint32_t r = 0;
  std::uint32_t controlled = 0;
  std::uint32_t m = 0;
  std::uint64_t trials = 0;
  std::uint64_t forged = 0;
  double rate = 0.0;
  /// C(controlled, m) / C(q, m).
  double bound = 0.0;
  /// sqrt(p (1 - p) / trials).
  double sigma = 0.0;
};

/// Adv1 with r - 1 controlled nodes against `trials` sampled requests.
Adv1Report adv1_monte_carlo(std::uint32_t q, std::uint32_t r, double p, std::uint64_t trials,
                            ChannelMode mode, std::uint64_t seed);

nlohmann::json to_json(const Adv1Report& r);

/// Two branches sharing blocks [0, fork_height]; each then gets its own
/// marker block and t + 1 empty blocks so the marker is final.
std::pair<Chain, Chain> adv2_fork(const Chain& chain, Height fork_height);

/// Preset for the double-task attack: branch A towards victim_i, branch B
/// towards victim_k, silent to everyone else.
AdversarySpec adv2_double_task(SystemId adv_system, SystemId victim_i, SystemId victim_k);

}  // namespace xchain
