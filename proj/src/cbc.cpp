#include "xchain/cbc.hpp"

namespace xchain {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Init: return "Init";
    case Phase::CtxCommitted: return "CtxCommitted";
    case Phase::TxCommitted: return "TxCommitted";
    case Phase::AwaitExpiry: return "AwaitExpiry";
    case Phase::Finalized: return "Finalized";
    case Phase::Aborted: return "Aborted";
  }
  return "unknown";
}

namespace {

Phase transition(CbcSession& s, const Chain& chain, Phase next) {
  if (next != s.phase) {
    s.phase = next;
    s.history.push_back({next, chain.height()});
  }
  return s.phase;
}

}  // namespace

CbcSession make_session(SystemId self, const ContractTx& ctx, Transaction target,
                        Transaction reverse, Height poll_interval) {
  CbcSession s;
  s.self = self;
  s.ctx = ctx;
  s.contract = contract_transaction(ctx, self);
  s.target = std::move(target);
  s.reverse = std::move(reverse);
  s.poll_interval = poll_interval;
  return s;
}

ContractTx derive_counterpart(const ContractTx& ctx_i, SystemId self) {
  ContractTx c;
  c.local_tx = ctx_i.remote_tx;
  c.local_reverse = ctx_i.remote_reverse;
  c.local_expiry = ctx_i.remote_expiry;
  c.peer = self;
  c.remote_tx = ctx_i.local_tx;
  c.remote_reverse = ctx_i.local_reverse;
  c.remote_expiry = ctx_i.local_expiry;
  return c;
}

HashDigest peer_contract_id(const CbcSession& session) {
  return contract_transaction(derive_counterpart(session.ctx, session.self), session.ctx.peer).id;
}

Phase start_session(CbcSession& session, Chain& chain) {
  if (session.phase != Phase::Init) return session.phase;
  if (session.peer_byzantine || !chain.verify_contract(session.contract, session.target)) {
    return transition(session, chain, Phase::Aborted);
  }
  chain.submit(session.contract);
  return transition(session, chain, Phase::CtxCommitted);
}

Phase on_poll_result(CbcSession& session, Chain& chain, std::optional<Height> found) {
  if (session.phase != Phase::CtxCommitted) return session.phase;
  if (chain.height() >= session.ctx.local_expiry || session.peer_byzantine) {
    return transition(session, chain, Phase::AwaitExpiry);
  }
  if (!found) return session.phase;
  if (chain.verify(session.target)) {
    chain.submit(session.target);
    return transition(session, chain, Phase::TxCommitted);
  }
  return transition(session, chain, Phase::AwaitExpiry);
}

Phase poll_peer(CbcSession& session, Chain& chain, RequestChannel& channel) {
  if (session.phase != Phase::CtxCommitted) return session.phase;
  if (chain.height() >= session.ctx.local_expiry || session.peer_byzantine) {
    return transition(session, chain, Phase::AwaitExpiry);
  }
  try {
    auto [found, view] = send_check(channel, peer_contract_id(session));
    return on_poll_result(session, chain, found);
  } catch (const ChannelTimeout&) {
    return session.phase;
  }
}

Phase reach_expiry(CbcSession& session, const Chain& chain) {
  if ((session.phase == Phase::CtxCommitted || session.phase == Phase::TxCommitted) &&
      chain.height() >= session.ctx.local_expiry) {
    return transition(session, chain, Phase::AwaitExpiry);
  }
  return session.phase;
}

bool await_remote_expiry(const CbcSession& session, const ViewList& view_list) {
  const View* v = view_list.find(session.ctx.peer);
  return v != nullptr && v->height >= session.ctx.remote_expiry;
}

Phase timeout(CbcSession& session, Chain& chain, std::optional<Height> hc,
              std::optional<Height> hc2) {
  if (session.phase == Phase::Finalized || session.phase == Phase::Aborted) return session.phase;
  session.hc = hc;
  session.hc_reverse = hc2;
  chain.remove_from_waiting(session.contract.id);
  if (!chain.is_committed(session.target.id)) {
    return transition(session, chain, Phase::Finalized);
  }
  const bool peer_missed = !hc || *hc > session.ctx.remote_expiry;
  const bool peer_reversed = hc2.has_value();
  if (session.peer_byzantine || peer_missed || peer_reversed) {
    session.reverse_committed = chain.submit(session.reverse);
  }
  return transition(session, chain, Phase::Finalized);
}

nlohmann::json transcript_line(std::uint64_t tick, std::uint64_t task, SystemId system,
                               Phase phase, Height height) {
  return {{"tick", tick},
          {"task", task},
          {"system", system.value},
          {"phase", to_string(phase)},
          {"height", height}};
}

}  // namespace xchain
