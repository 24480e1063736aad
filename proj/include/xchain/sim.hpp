#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xchain/adversary.hpp"
#include "xchain/chain.hpp"
#include "xchain/gossip.hpp"
#include "xchain/rng.hpp"

namespace xchain {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  std::string name = "run";
  std::size_t n = 3;
  double p_c = 0.1;
  double g = 0.1;
  Height num_blocks = 10000;
  std::uint64_t block_interval = 1;
  std::uint64_t seed = 1;

  /// Network delay in ticks: latency + uniform integer in [-jitter, jitter].
  std::uint64_t latency = 1;
  std::uint64_t jitter = 1;

  /// Blocks without a push after which a system pushes anyway.
  Height gossip_timer = 10;
  /// Push in the block after the local view list changed.
  bool relay_on_update = true;
  Height poll_interval = 1;

  /// Task expiry margin E = ceil(expiry_factor * (k + expected_gap)).
  double expiry_factor = 2.0;
  double expected_gap = 3.0;
  /// Extra uniform margin in [0, expiry_jitter] blocks per side.
  Height expiry_jitter = 0;
  /// Blocks past local expiry after which the timeout query is sent even
  /// though the stored peer view is still behind. Unset means E.
  std::optional<Height> patience;

  /// Probability that a target depends on the previous target of its system.
  double dependency_rate = 0.0;
  /// Extra uniform delay in [0, offer_delay_max] ticks on task delivery.
  std::uint64_t offer_delay_max = 0;

  /// Upper bound on blocks after num_blocks spent finishing open tasks.
  std::optional<Height> drain_cap;

  /// Empty means full mesh.
  std::vector<std::pair<SystemId, SystemId>> edges;
  SystemConfig system_defaults;
  /// Per-system overrides (id must match the index).
  std::vector<SystemConfig> systems;

  AdversarySpec adversary;
  bool record_gap_samples = false;

  /// Fills `systems` from the defaults where missing. Throws ConfigError.
  void finalize();
  void validate() const;
  Height expiry_margin(std::uint32_t k) const;
  Topology topology() const;
};

nlohmann::json to_json(const SimConfig& c);

struct GapRecord {
  std::uint64_t tick;
  SystemId observer;
  SystemId observed;
  Height gap;
};

struct Metrics {
  std::vector<std::uint64_t> requests_sent;
  std::vector<std::uint64_t> gossips_sent;
  std::map<Height, std::uint64_t> gap_histogram;
  std::vector<GapRecord> gap_samples;
  std::uint64_t tasks_started = 0;
  std::uint64_t tasks_succeeded = 0;
  std::uint64_t tasks_reversed = 0;
  std::uint64_t tasks_aborted = 0;
  std::uint64_t conflicts_detected = 0;
  std::uint64_t invalid_proofs = 0;
  std::uint64_t pulls_sent = 0;

  std::uint64_t max_requests() const;
  std::uint64_t max_gossips() const;
  std::uint64_t total_requests() const;
  std::uint64_t total_gossips() const;
  std::uint64_t gap_count() const;
  double mean_gap() const;
  double gap_variance() const;
  /// Nearest-rank percentile over the histogram.
  Height gap_percentile(double pct) const;
};

/// Everything committed or intended for one two-system task.
struct TaskRecord {
  std::uint64_t id = 0;
  SystemId initiator;
  SystemId counterparty;
  Transaction ctx_i;
  Transaction ctx_j;
  Transaction tx_i;
  Transaction rev_i;
  Transaction tx_j;
  Transaction rev_j;
  Height h_i = 0;
  Height h_j = 0;
  std::uint64_t created_tick = 0;
  bool adversarial = false;
};

enum class TaskOutcome { Succeeded, Reversed, Aborted, Partial };

std::string_view to_string(TaskOutcome o);

/// Per-side state of one task seen from a single chain.
struct SideState {
  bool ctx = false;
  bool target = false;
  bool reverse = false;
};

SideState side_state(const Chain& chain, const Transaction& ctx, const Transaction& target,
                     const Transaction& reverse);

/// Classifies a task from the final state of both chains.
TaskOutcome classify_task(const SideState& i, const SideState& j);

struct VictimOutcome {
  SystemId system;
  std::string outcome;  // completed | reversed | aborted | unfinished
  std::optional<std::uint64_t> expiry_tick;
  bool peer_flagged = false;
};

struct AuditFlag {
  std::uint64_t task;
  SystemId system;
  std::string reason;
};

struct AttackReport {
  bool detected = false;
  std::optional<std::uint64_t> detection_tick;
  std::uint64_t evidence_count = 0;
  std::vector<VictimOutcome> victims;
  std::optional<std::uint64_t> later_victim_expiry_tick;
  bool detected_before_expiry = false;
  bool double_completion = false;
  bool some_victim_protected = false;
  std::vector<AuditFlag> audit;
  std::vector<Adv1Report> adv1;
};

nlohmann::json to_json(const AttackReport& r);

struct SimResult {
  Metrics metrics;
  std::vector<std::string> transcript;
  std::vector<TaskRecord> tasks;
  /// Final honest chains (branch A for a forking adversary).
  std::vector<Chain> chains;
  std::optional<Chain> adversary_branch_b;
  AttackReport attack;
  std::vector<std::string> violations;
  Height drain_blocks = 0;
};

/// Geometric draw on {0, 1, ...} with mean p_c / (1 - p_c).
std::uint64_t draw_task_count(double p_c, Rng& rng);

/// Gap records for every ordered pair of distinct honest systems.
std::vector<GapRecord> sample_gap(const std::vector<ViewList>& view_lists,
                                  const std::vector<Height>& true_heights, std::uint64_t tick,
                                  const std::vector<bool>& honest = {});

/// Flags reverse transactions committed after a task completed on both sides.
std::vector<AuditFlag> audit_late_commits(const std::vector<TaskRecord>& tasks,
                                          const std::vector<Chain>& chains);

SimResult run(SimConfig config);

}  // namespace xchain
