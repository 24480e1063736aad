#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xchain/chain.hpp"
#include "xchain/channel.hpp"
#include "xchain/gossip.hpp"
#include "xchain/types.hpp"

namespace xchain {

enum class Phase { Init, CtxCommitted, TxCommitted, AwaitExpiry, Finalized, Aborted };

std::string_view to_string(Phase p);

struct PhaseChange {
  Phase phase;
  Height height;
};

/// State of one side of a two-system cross-chain task.
struct CbcSession {
  SystemId self;
  ContractTx ctx;
  Transaction contract;  // ctx wrapped as a transaction
  Transaction target;    // tx_i
  Transaction reverse;   // tx_i'
  Phase phase = Phase::Init;
  Height poll_interval = 1;

  /// Results of the timeout query: check(H(tx_j)) and check(H(tx_j')).
  std::optional<Height> hc;
  std::optional<Height> hc_reverse;

  /// Set once evidence shows the peer forked; the session then cancels.
  bool peer_byzantine = false;
  bool reverse_committed = false;

  std::vector<PhaseChange> history;
};

/// Builds a session for `self` from its half of the task.
CbcSession make_session(SystemId self, const ContractTx& ctx, Transaction target,
                        Transaction reverse, Height poll_interval = 1);

/// The symmetric contract held by the peer. Applying it twice (with the
/// peer as `self` the second time) returns the original.
ContractTx derive_counterpart(const ContractTx& ctx_i, SystemId self);

/// Id of the contract transaction the peer commits for this task.
HashDigest peer_contract_id(const CbcSession& session);

/// Verifies and stages the contract. Aborted if it does not verify or the peer
/// is already known to be Byzantine.
Phase start_session(CbcSession& session, Chain& chain);

/// Branch taken on the answer to check_j(H(ctx_j)). A present height (0
/// included) counts as found.
Phase on_poll_result(CbcSession& session, Chain& chain, std::optional<Height> found);

/// One iteration of the polling loop over a synchronous channel. Channel
/// timeouts leave the phase unchanged.
Phase poll_peer(CbcSession& session, Chain& chain, RequestChannel& channel);

/// Moves a polling or locked session to AwaitExpiry once the local chain has
/// reached the local expiry height.
Phase reach_expiry(CbcSession& session, const Chain& chain);

/// True once the stored view of the peer covers the remote expiry height.
bool await_remote_expiry(const CbcSession& session, const ViewList& view_list);

/// Final step: drops the contract from the waiting list, then commits the
/// reverse transaction if the target is committed and the peer did not
/// complete in time (or is Byzantine, or reversed its own side).
Phase timeout(CbcSession& session, Chain& chain, std::optional<Height> hc,
              std::optional<Height> hc2);

nlohmann::json transcript_line(std::uint64_t tick, std::uint64_t task, SystemId system,
                               Phase phase, Height height);

}  // namespace xchain
