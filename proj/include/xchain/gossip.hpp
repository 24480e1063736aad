#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include <json.hpp>

#include "xchain/chain.hpp"
#include "xchain/rng.hpp"
#include "xchain/types.hpp"

namespace xchain {

struct CbcSession;

/// Configurations of every system, indexed by SystemId::value.
using Registry = std::vector<SystemConfig>;

/// A system's cached views of every system, including its own.
struct ViewList {
  SystemId owner;
  std::map<SystemId, View> entries;
  std::uint64_t version = 0;

  const View* find(SystemId s) const;
  /// Replaces the owner's entry with a freshly generated view.
  void set_own(View v);

  /// Number of digests carried: aggregate plus recent hashes per entry.
  std::size_t digest_count() const;

  bool operator==(const ViewList&) const = default;
};

struct ConflictEvidence {
  SystemId accused;
  View view_a;
  View view_b;
  SystemId reporter;

  bool operator==(const ConflictEvidence&) const = default;
};

enum class Extension {
  Extends,      // new is old advanced along the same chain
  Conflict,     // overlapping heights disagree
  GapTooLarge,  // not decidable without the missing header hashes
};

/// Decides whether `next` extends `prev` for a system with view depth k.
/// `bridge` supplies header hashes for heights [prev.length(), ...) that are
/// known from a pull response. Requires next.height >= prev.height.
Extension classify_extension(const View& prev, const View& next, std::uint32_t k,
                             std::span<const HashDigest> bridge = {});

/// True iff `next` verifiably extends `old`. A gap wider than k returns false
/// (see classify_extension for telling a pull apart from a conflict).
bool can_extend(const View& old, const View& next, std::uint32_t k);

/// True when the two views cannot both come from one honest chain.
bool irreconcilable(const View& a, const View& b, std::uint32_t k);

struct PullNeed {
  SystemId system;
  View candidate;
};

struct MergeResult {
  bool updated = false;
  std::vector<PullNeed> pulls;
  std::vector<ConflictEvidence> conflicts;
  std::size_t invalid_proofs = 0;
};

/// Folds `incoming` into `local` entry by entry: extensions replace, wide gaps
/// become pull requests, irreconcilable pairs become evidence and entries with
/// malformed proofs are dropped.
MergeResult merge(ViewList& local, const ViewList& incoming, const Registry& systems);

/// Single-view variant used for views attached to check requests/responses.
MergeResult merge_view(ViewList& local, SystemId system, const View& view,
                       const Registry& systems);

/// Undirected gossip graph.
class Topology {
 public:
  Topology() = default;
  static Topology full_mesh(std::size_t n);
  static Topology from_edges(std::size_t n, std::span<const std::pair<SystemId, SystemId>> edges);

  std::size_t size() const { return adjacency_.size(); }
  const std::vector<SystemId>& neighbors(SystemId s) const { return adjacency_.at(s.value); }
  bool connected() const;
  std::vector<std::pair<SystemId, SystemId>> edges() const;

 private:
  std::vector<std::vector<SystemId>> adjacency_;
};

struct PullRequest {
  SystemId system;
  Height from_length = 0;  // requester's known finalized length
  Height to_length = 0;    // length of the candidate that could not be verified
};

struct PullResponse {
  SystemId system;
  View view;
  /// Header hashes for heights [bridge_start, view.length() - k).
  Height bridge_start = 0;
  std::vector<HashDigest> bridge;
};

/// Pull answers are capped at this many header hashes per k.
inline constexpr std::uint32_t kPullSpanFactor = 4;

PullResponse answer_pull(const Chain& chain, const PullRequest& request);

/// Applies a pull response to the requester's list; `candidate` is the view
/// that triggered the pull and is re-evaluated against the refreshed entry.
MergeResult apply_pull(ViewList& local, const PullResponse& response,
                       const std::optional<View>& candidate, const Registry& systems);

enum class GossipType { Push, PullReq, PullResp, Evidence };

struct GossipMessage {
  GossipType type = GossipType::Push;
  SystemId sender;
  std::uint64_t tick = 0;
  std::variant<ViewList, PullRequest, PullResponse, ConflictEvidence> payload;
};

struct Outgoing {
  SystemId recipient;
  GossipMessage message;
};

/// Picks each gossip neighbour independently with probability g and addresses
/// the full current view list to it.
std::vector<Outgoing> push_round(SystemId self, const ViewList& view_list,
                                 const Topology& peers, double g, Rng& rng,
                                 std::uint64_t tick = 0);

/// Local record of detected Byzantine systems.
struct EvidenceBook {
  std::set<SystemId> byzantine;
  std::set<SystemId> flagged_reporters;
  std::vector<ConflictEvidence> accepted;

  bool is_byzantine(SystemId s) const { return byzantine.contains(s); }
};

struct EvidenceEffects {
  bool accepted = false;
  bool newly_accused = false;
  bool rebroadcast = false;
  bool bogus = false;
  std::size_t sessions_cancelled = 0;
};

/// Checks proofs and irreconcilability.
bool validate_evidence(const ConflictEvidence& evidence, const Registry& systems);

/// Marks the accused Byzantine and flags every session with it so that its
/// Timeout takes the reverse path. Evidence is re-broadcast the first time an
/// accused system is learned about. Bogus evidence (views that reconcile or
/// carry bad proofs) is dropped and flags the reporter.
EvidenceEffects handle_evidence(const ConflictEvidence& evidence, EvidenceBook& book,
                                const Registry& systems, std::span<CbcSession* const> sessions);

nlohmann::json to_json(const ViewList& vl);
ViewList view_list_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GossipMessage& m);
GossipMessage gossip_from_json(const nlohmann::json& j);
std::string_view to_string(GossipType t);

}  // namespace xchain
