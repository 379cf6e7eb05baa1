#include "geotxn/geo_agent.h"

namespace geotxn {

GeoAgent::GeoAgent(SimKernel& kernel, Network& network, DataSource& source, AgentConfig config,
                   Trace* trace)
    : kernel_(kernel), network_(network), source_(source), config_(config), trace_(trace) {
  if (config_.lan_delay < 0) throw ConfigError("lan_delay must be >= 0");
  network_.attach(source_.site(), this);
}

Message GeoAgent::make(MsgKind kind, SiteId dst, TxnId xid) const {
  Message m;
  m.kind = kind;
  m.src = source_.site();
  m.dst = dst;
  m.tid = xid;
  return m;
}

void GeoAgent::reply(MsgKind kind, TxnId xid, AbortReason reason, bool peers_notified) {
  Message m = make(kind, kCoordinatorSite, xid);
  m.reason = reason;
  m.peers_notified = peers_notified;
  const auto state = source_.state(xid);
  m.site_final = state && *state == XaState::kAborted;
  if (auto it = contexts_.find(xid); it != contexts_.end()) m.lel = it->second.lel;
  const SubtxnTiming t = source_.timing(xid);
  m.first_lock_at = t.first_lock_at;
  m.last_unlock_at = t.last_unlock_at;
  network_.send(std::move(m));
}

void GeoAgent::after_lan(int hops, std::function<void()> action, const char* label) {
  const std::uint64_t epoch = epoch_;
  kernel_.schedule_after(
      config_.lan_delay * hops,
      [this, epoch, a = std::move(action)]() {
        if (epoch == epoch_) a();
      },
      label, source_.site());
}

std::vector<SiteId> GeoAgent::peers_of(TxnId xid) const {
  auto it = contexts_.find(xid);
  return it == contexts_.end() ? std::vector<SiteId>{} : it->second.peers;
}

void GeoAgent::deliver(const Message& msg) {
  const TxnId xid = msg.tid;
  switch (msg.kind) {
    case MsgKind::kStatement:
      on_statement(msg);
      break;
    case MsgKind::kPrepare: {
      const auto state = source_.state(xid);
      if (!state || *state == XaState::kAborted) {
        source_.rollback(xid);
        reply(MsgKind::kVoteNo, xid, AbortReason::kSiteFailure);
        contexts_.erase(xid);
        break;
      }
      source_.end(xid);
      const Vote vote = source_.prepare(xid);
      reply(vote == Vote::kYes ? MsgKind::kPrepared : MsgKind::kVoteNo, xid);
      break;
    }
    case MsgKind::kCommit:
    case MsgKind::kCommitOnePhase: {
      const XaState st = source_.commit(xid, msg.kind == MsgKind::kCommitOnePhase);
      reply(st == XaState::kCommitted ? MsgKind::kCommitted : MsgKind::kRollbacked, xid,
            st == XaState::kCommitted ? AbortReason::kNone : AbortReason::kSiteFailure);
      contexts_.erase(xid);
      break;
    }
    case MsgKind::kRollback:
      source_.rollback(xid);
      reply(MsgKind::kRollbacked, xid);
      contexts_.erase(xid);
      break;
    case MsgKind::kQuery: {
      Message m = make(MsgKind::kQueryReply, kCoordinatorSite, xid);
      m.state = source_.state(xid);
      network_.send(std::move(m));
      break;
    }
    case MsgKind::kListPrepared: {
      Message m = make(MsgKind::kPreparedList, kCoordinatorSite, 0);
      m.xids = source_.prepared_xids();
      network_.send(std::move(m));
      break;
    }
    case MsgKind::kProbe: {
      Message m = make(MsgKind::kProbeReply, msg.src, 0);
      m.probe_sent_at = msg.probe_sent_at;
      network_.send(std::move(m));
      break;
    }
    case MsgKind::kPeerRollback:
      handle_peer_rollback(msg);
      break;
    default:
      throw ProtocolError(std::string("agent received unexpected message ") +
                          to_string(msg.kind));
  }
}

void GeoAgent::on_statement(const Message& msg) {
  const TxnId xid = msg.tid;
  const auto known = source_.state(xid);
  if (!known && !msg.first) {
    // Earlier statements were lost with a crash.
    source_.rollback(xid);
    reply(MsgKind::kFailure, xid, AbortReason::kSiteFailure);
    return;
  }
  if (!source_.begin(xid)) {
    // Refused: a tombstone or an earlier abort already finalized it.
    reply(MsgKind::kFailure, xid, AbortReason::kPeerFailure);
    contexts_.erase(xid);
    return;
  }
  Context& ctx = contexts_[xid];
  ctx.peers = msg.peers;
  ctx.round = msg.round;
  ctx.ops = msg.ops;
  ctx.next_op = 0;
  ctx.is_last = msg.is_last;
  ctx.statement_started = kernel_.now();
  run_next_op(xid);
}

void GeoAgent::run_next_op(TxnId xid) {
  auto it = contexts_.find(xid);
  if (it == contexts_.end()) return;
  Context& ctx = it->second;
  if (ctx.next_op == ctx.ops.size()) {
    ctx.lel += kernel_.now() - ctx.statement_started;
    if (ctx.is_last && config_.decentralized_prepare) {
      async_prepare(xid);
    } else {
      Message m = make(MsgKind::kResult, kCoordinatorSite, xid);
      m.round = ctx.round;
      m.lel = ctx.lel;
      network_.send(std::move(m));
    }
    return;
  }
  const Op op = ctx.ops[ctx.next_op];
  const std::uint64_t epoch = epoch_;
  source_.execute(xid, op, [this, xid, epoch](OpResult r) {
    if (epoch != epoch_) return;
    if (r.status == OpStatus::kLockTimeout) {
      on_execution_failure(xid, AbortReason::kLockTimeout);
      return;
    }
    auto cit = contexts_.find(xid);
    if (cit == contexts_.end()) return;
    ++cit->second.next_op;
    run_next_op(xid);
  });
}

void GeoAgent::on_execution_failure(TxnId xid, AbortReason reason) {
  if (auto it = contexts_.find(xid); it != contexts_.end()) {
    it->second.lel += kernel_.now() - it->second.statement_started;
  }
  if (config_.early_abort) {
    reply(MsgKind::kRollbackOnly, xid, reason, true);
    async_rollback(xid, reason);
  } else {
    reply(MsgKind::kFailure, xid, reason);
    contexts_.erase(xid);
  }
}

void GeoAgent::async_prepare(TxnId xid) {
  after_lan(
      1,
      [this, xid]() {
        auto it = contexts_.find(xid);
        if (it == contexts_.end()) return;
        if (!source_.end(xid)) {
          reply(MsgKind::kRollbackOnly, xid, AbortReason::kPeerFailure, config_.early_abort);
          if (config_.early_abort) {
            async_rollback(xid, AbortReason::kPeerFailure);
          } else {
            contexts_.erase(xid);
          }
          return;
        }
        if (it->second.peers.empty()) {
          if (trace_ != nullptr) trace_->emit(kernel_.now(), xid, site(), "idle");
          after_lan(1, [this, xid]() { reply(MsgKind::kIdle, xid); }, "agent_idle");
          return;
        }
        const Vote vote = source_.prepare(xid);
        if (vote == Vote::kNo) {
          after_lan(
              1,
              [this, xid]() {
                reply(MsgKind::kFailure, xid, AbortReason::kPeerFailure, config_.early_abort);
                if (config_.early_abort) {
                  async_rollback(xid, AbortReason::kPeerFailure);
                } else {
                  contexts_.erase(xid);
                }
              },
              "agent_vote_no");
          return;
        }
        after_lan(1, [this, xid]() { reply(MsgKind::kPrepared, xid); }, "agent_prepared");
      },
      "agent_prepare");
}

void GeoAgent::async_rollback(TxnId xid, AbortReason reason) {
  for (SiteId peer : peers_of(xid)) {
    Message m = make(MsgKind::kPeerRollback, peer, xid);
    m.reason = reason;
    network_.send(std::move(m));
  }
  after_lan(
      1,
      [this, xid]() {
        source_.rollback(xid);
        after_lan(
            1,
            [this, xid]() {
              reply(MsgKind::kRollbacked, xid);
              contexts_.erase(xid);
            },
            "agent_rollbacked");
      },
      "agent_rollback");
}

void GeoAgent::handle_peer_rollback(const Message& msg) {
  const TxnId xid = msg.tid;
  after_lan(
      1,
      [this, xid]() {
        source_.rollback(xid);
        contexts_.erase(xid);
        const auto state = source_.state(xid);
        if (!state || *state != XaState::kAborted) return;
        after_lan(1, [this, xid]() { reply(MsgKind::kRollbacked, xid, AbortReason::kPeerFailure); },
                  "agent_rollbacked");
      },
      "peer_rollback");
}

void GeoAgent::crash() {
  ++epoch_;
  contexts_.clear();
  source_.crash();
  network_.set_up(site(), false);
}

void GeoAgent::restart() {
  network_.set_up(site(), true);
  source_.restart();
  network_.send(make(MsgKind::kReconnect, kCoordinatorSite, 0));
}

void GeoAgent::on_coordinator_disconnect() {
  if (!source_.is_up()) return;
  source_.abort_unprepared();
  for (auto it = contexts_.begin(); it != contexts_.end();) {
    const auto state = source_.state(it->first);
    if (state && *state == XaState::kAborted) {
      it = contexts_.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace geotxn
