#include "geotxn/coordinator.h"

#include <algorithm>

namespace geotxn {

std::vector<SiteId> Transaction::participants() const {
  std::set<SiteId> sites;
  for (const auto& round : rounds) {
    for (const auto& st : round) sites.insert(st.site);
  }
  return {sites.begin(), sites.end()};
}

void Transaction::validate() const {
  if (rounds.empty()) throw ProtocolError("transaction has no rounds");
  std::set<SiteId> closed;
  for (const auto& round : rounds) {
    if (round.empty()) throw ProtocolError("transaction has an empty round");
    std::set<SiteId> seen;
    for (const auto& st : round) {
      if (st.site == kCoordinatorSite) throw ProtocolError("statement addressed to the coordinator");
      if (!seen.insert(st.site).second) {
        throw ProtocolError("two statements for one site in a round");
      }
      if (closed.count(st.site) != 0) throw ProtocolError("statement after the last one");
      if (st.is_last) closed.insert(st.site);
    }
  }
  for (SiteId s : participants()) {
    if (closed.count(s) == 0) throw ProtocolError("participant without a last statement");
  }
}

const char* to_string(ParticipantState state) {
  switch (state) {
    case ParticipantState::kNotStarted: return "NOT_STARTED";
    case ParticipantState::kExecuting: return "EXECUTING";
    case ParticipantState::kIdle: return "IDLE";
    case ParticipantState::kPrepared: return "PREPARED";
    case ParticipantState::kFailure: return "FAILURE";
    case ParticipantState::kRollbackOnly: return "ROLLBACK_ONLY";
    case ParticipantState::kRollbacked: return "ROLLBACKED";
    case ParticipantState::kCommitted: return "COMMITTED";
  }
  return "?";
}

void CommitLog::append(CommitLogRecord record) {
  const TxnId tid = record.tid;
  if (!records_.emplace(tid, std::move(record)).second) {
    throw ProtocolError("second commit-log record for tid " + std::to_string(tid));
  }
}

const CommitLogRecord* CommitLog::find(TxnId tid) const {
  auto it = records_.find(tid);
  return it == records_.end() ? nullptr : &it->second;
}

Coordinator::Coordinator(SimKernel& kernel, Network& network, CoordinatorConfig config,
                         SchedulerConfig scheduler, RttMonitor* monitor, Trace* trace)
    : kernel_(kernel),
      network_(network),
      config_(config),
      monitor_(monitor),
      trace_(trace),
      scheduler_(
          scheduler, [this](SiteId s) { return estimated_rtt(s); },
          [this]() { return kernel_.rng_next("dm.admission"); }) {
  if (config_.log_flush < 0) throw ConfigError("coordinator.log_flush must be >= 0");
  network_.attach(kCoordinatorSite, this);
}

Duration Coordinator::estimated_rtt(SiteId site) const {
  if (monitor_ != nullptr) return monitor_->estimated_rtt(site);
  return network_.profile().rtt(kCoordinatorSite, site, kernel_.now());
}

void Coordinator::emit(TxnId tid, std::string event) {
  if (trace_ != nullptr) trace_->emit(kernel_.now(), tid, kCoordinatorSite, std::move(event));
}

template <class F>
EventId Coordinator::after(Duration delay, F action, const char* label) {
  const std::uint64_t epoch = epoch_;
  return kernel_.schedule_after(
      delay,
      [this, epoch, a = std::move(action)]() mutable {
        if (epoch == epoch_ && up_) a();
      },
      label);
}

Coordinator::Txn* Coordinator::find(TxnId tid) {
  auto it = txns_.find(tid);
  return it == txns_.end() ? nullptr : &it->second;
}

void Coordinator::send(MsgKind kind, SiteId dst, TxnId tid) {
  Message m;
  m.kind = kind;
  m.src = kCoordinatorSite;
  m.dst = dst;
  m.tid = tid;
  network_.send(std::move(m));
}

void Coordinator::submit(Transaction txn, OutcomeCallback done) {
  if (!up_) throw ProtocolError("submit while the coordinator is down");
  txn.validate();
  const TxnId tid = txn.tid;
  if (txns_.count(tid) != 0) throw ProtocolError("duplicate tid " + std::to_string(tid));
  txn.submit_time = kernel_.now();
  Txn& t = txns_[tid];
  for (SiteId s : txn.participants()) t.parts[s].site = s;
  t.txn = std::move(txn);
  t.done = std::move(done);
  emit(tid, "submit");
  try_admit(tid);
}

void Coordinator::try_admit(TxnId tid) {
  Txn* t = find(tid);
  if (t == nullptr || t->phase != Phase::kAdmission) return;
  schedule_round(*t);
}

void Coordinator::schedule_round(Txn& t) {
  const TxnId tid = t.txn.tid;
  std::vector<SubtxnPlan> plans;
  for (const auto& st : t.txn.rounds[t.round]) {
    SubtxnPlan plan{st.site, {}};
    for (const Op& op : st.ops) plan.keys.push_back(op.key);
    plans.push_back(std::move(plan));
  }
  const ScheduleDecision d = scheduler_.schedule(plans, t.retry_cnt, t.round == 0);
  switch (d.kind) {
    case ScheduleDecision::Kind::kDelay:
      ++t.retry_cnt;
      emit(tid, "admission_delay");
      after(d.backoff, [this, tid]() { try_admit(tid); }, "admission_retry");
      return;
    case ScheduleDecision::Kind::kAbort:
      t.decided = true;
      t.reason = AbortReason::kAdmission;
      maybe_finish(t);
      return;
    case ScheduleDecision::Kind::kSchedule:
      for (const auto& plan : plans) {
        auto& keys = t.parts.at(plan.site).admitted_keys;
        keys.insert(keys.end(), plan.keys.begin(), plan.keys.end());
      }
      dispatch_round(t, d.schedule);
      return;
  }
}

void Coordinator::dispatch_round(Txn& t, const Schedule& schedule) {
  const TxnId tid = t.txn.tid;
  const std::size_t round = t.round;
  t.phase = Phase::kExecuting;
  ++t.wan_round_trips;
  for (const auto& st : t.txn.rounds[round]) {
    Participant& p = t.parts.at(st.site);
    p.awaiting = true;
    p.state = ParticipantState::kExecuting;
    const Duration delay = schedule.postpone_for(st.site);
    const SiteId site = st.site;
    if (delay <= 0) {
      send_statement(tid, site, round);
    } else {
      t.pending_sends.push_back(after(
          delay, [this, tid, site, round]() { send_statement(tid, site, round); },
          "postponed_statement"));
    }
  }
  arm_watchdog(t);
}

void Coordinator::send_statement(TxnId tid, SiteId site, std::size_t round) {
  Txn* t = find(tid);
  if (t == nullptr || t->decided || t->round != round) return;
  const auto& stmts = t->txn.rounds[round];
  auto st = std::find_if(stmts.begin(), stmts.end(),
                         [site](const Statement& s) { return s.site == site; });
  Participant& p = t->parts.at(site);
  Message m;
  m.kind = MsgKind::kStatement;
  m.src = kCoordinatorSite;
  m.dst = site;
  m.tid = tid;
  m.round = static_cast<std::uint32_t>(round);
  m.ops = st->ops;
  m.is_last = st->is_last;
  m.first = !p.contacted;
  for (const auto& [other, _] : t->parts) {
    if (other != site) m.peers.push_back(other);
  }
  p.contacted = true;
  network_.send(std::move(m));
}

void Coordinator::on_round_reply(Txn& t, Participant& p) {
  p.awaiting = false;
  for (const auto& [site, q] : t.parts) {
    if (q.awaiting) return;
  }
  t.pending_sends.clear();
  if (t.round + 1 < t.txn.rounds.size()) {
    ++t.round;
    schedule_round(t);
  } else {
    finish_execution(t);
  }
}

void Coordinator::finish_execution(Txn& t) {
  if (t.txn.client_abort) {
    decide(t, false, AbortReason::kClient);
    return;
  }
  if (config_.decentralized_prepare) {
    t.phase = Phase::kVoting;
    maybe_decide(t);
    return;
  }
  if (!t.txn.distributed()) {
    decide(t, true, AbortReason::kNone);
    return;
  }
  t.phase = Phase::kVoting;
  ++t.wan_round_trips;
  for (auto& [site, p] : t.parts) send(MsgKind::kPrepare, site, t.txn.tid);
  arm_watchdog(t);
}

void Coordinator::on_vote(Txn& t, Participant& p, ParticipantState vote) {
  if (t.decided || p.state == vote) return;
  p.state = vote;
  if (t.phase == Phase::kExecuting) {
    if (p.awaiting) on_round_reply(t, p);
  } else if (t.phase == Phase::kVoting) {
    maybe_decide(t);
  }
}

void Coordinator::maybe_decide(Txn& t) {
  for (const auto& [site, p] : t.parts) {
    if (p.state != ParticipantState::kIdle && p.state != ParticipantState::kPrepared) return;
  }
  decide(t, true, AbortReason::kNone);
}

void Coordinator::decide(Txn& t, bool commit, AbortReason reason) {
  if (t.decided) return;
  t.decided = true;
  t.commit = commit;
  t.reason = reason;
  for (EventId id : t.pending_sends) kernel_.cancel(id);
  t.pending_sends.clear();
  const bool contacted = std::any_of(t.parts.begin(), t.parts.end(),
                                     [](const auto& kv) { return kv.second.contacted; });
  const TxnId tid = t.txn.tid;
  if (t.txn.distributed() && contacted) {
    t.phase = Phase::kFlushing;
    after(config_.log_flush, [this, tid]() { apply_decision(tid); }, "log_flush");
  } else {
    apply_decision(tid);
  }
}

void Coordinator::apply_decision(TxnId tid) {
  Txn* t = find(tid);
  if (t == nullptr) return;
  const bool contacted = std::any_of(t->parts.begin(), t->parts.end(),
                                     [](const auto& kv) { return kv.second.contacted; });
  if (t->txn.distributed() && contacted && config_.write_commit_log) {
    log_.append(CommitLogRecord{tid, t->commit, kernel_.now(), t->txn.participants()});
    emit(tid, t->commit ? "log commit" : "log abort");
    if (log_hook_ && log_hook_(tid)) return;
  }
  t->phase = t->commit ? Phase::kCommitting : Phase::kAborting;
  bool sent = false;
  for (auto& [site, p] : t->parts) {
    if (!p.contacted || p.final) continue;
    if (!t->commit && p.agent_abort) continue;
    send_decision(*t, p);
    sent = true;
  }
  if (sent) ++t->wan_round_trips;
  arm_watchdog(*t);
  maybe_finish(*t);
}

void Coordinator::send_decision(Txn& t, Participant& p) {
  MsgKind kind = MsgKind::kRollback;
  if (t.commit) kind = t.txn.distributed() ? MsgKind::kCommit : MsgKind::kCommitOnePhase;
  send(kind, p.site, t.txn.tid);
}

void Coordinator::mark_final(Txn& t, Participant& p, const Message& msg) {
  (void)t;
  p.final = true;
  p.awaiting = false;
  if (msg.first_lock_at) p.timing.first_lock_at = msg.first_lock_at;
  if (msg.last_unlock_at) p.timing.last_unlock_at = msg.last_unlock_at;
}

void Coordinator::on_failure(Txn& t, Participant& p, const Message& msg) {
  p.state = msg.kind == MsgKind::kRollbackOnly ? ParticipantState::kRollbackOnly
                                               : ParticipantState::kFailure;
  if (msg.lel > 0) p.lel = msg.lel;
  if (msg.site_final) mark_final(t, p, msg);
  if (msg.peers_notified) {
    for (auto& [site, q] : t.parts) q.agent_abort = true;
  }
  AbortReason reason = msg.reason == AbortReason::kNone ? AbortReason::kSiteFailure : msg.reason;
  if (t.decided) {
    if (!t.commit && t.reason == AbortReason::kPeerFailure && reason == AbortReason::kLockTimeout) {
      t.reason = reason;
    }
    maybe_finish(t);
    return;
  }
  p.awaiting = false;
  decide(t, false, reason);
}

void Coordinator::maybe_finish(Txn& t) {
  if (!t.decided || t.phase == Phase::kFlushing) return;
  for (const auto& [site, p] : t.parts) {
    if (p.contacted && !p.final) return;
  }
  TxnOutcome out;
  out.tid = t.txn.tid;
  out.committed = t.commit;
  out.reason = t.commit ? AbortReason::kNone : t.reason;
  out.submit_time = t.txn.submit_time;
  out.completion_time = kernel_.now();
  out.distributed = t.txn.distributed();
  out.wan_round_trips = t.wan_round_trips;
  std::vector<SubtxnRecord> records;
  for (const auto& [site, p] : t.parts) {
    if (p.admitted_keys.empty()) continue;
    records.push_back(SubtxnRecord{site, p.admitted_keys, p.lel, p.timing});
  }
  out.lock_contention_spans = scheduler_.record_completion(records, t.commit);
  emit(out.tid, t.commit ? std::string("outcome committed")
                         : std::string("outcome aborted ") + to_string(out.reason));
  kernel_.cancel(t.watchdog);
  OutcomeCallback done = std::move(t.done);
  txns_.erase(out.tid);
  if (done) done(out);
}

Duration Coordinator::watchdog_timeout(const Txn& t) const {
  Duration rtt = 0;
  for (const auto& [site, p] : t.parts) rtt = std::max(rtt, estimated_rtt(site));
  return 3 * rtt + config_.lock_wait_timeout;
}

void Coordinator::arm_watchdog(Txn& t) {
  kernel_.cancel(t.watchdog);
  const TxnId tid = t.txn.tid;
  t.watchdog = after(watchdog_timeout(t), [this, tid]() { on_watchdog(tid); }, "watchdog");
}

void Coordinator::on_watchdog(TxnId tid) {
  Txn* t = find(tid);
  if (t == nullptr) return;
  const TxnId id = t->txn.tid;
  for (auto& [site, p] : t->parts) {
    if (!p.contacted) continue;
    switch (t->phase) {
      case Phase::kExecuting:
        if (p.awaiting) send(MsgKind::kQuery, site, id);
        break;
      case Phase::kVoting:
        if (p.state != ParticipantState::kPrepared && p.state != ParticipantState::kIdle) {
          send(config_.decentralized_prepare ? MsgKind::kQuery : MsgKind::kPrepare, site, id);
        }
        break;
      case Phase::kCommitting:
      case Phase::kAborting:
        if (!p.final) send_decision(*t, p);
        break;
      case Phase::kAdmission:
      case Phase::kFlushing:
        break;
    }
  }
  arm_watchdog(*t);
}

void Coordinator::on_query_reply(const Message& msg) {
  Txn* t = find(msg.tid);
  if (t == nullptr || t->decided) return;
  auto pit = t->parts.find(msg.src);
  if (pit == t->parts.end()) return;
  Participant& p = pit->second;
  if (!msg.state || *msg.state == XaState::kAborted) {
    if (msg.state) mark_final(*t, p, msg);
    p.state = ParticipantState::kFailure;
    decide(*t, false, AbortReason::kSiteFailure);
  } else if (*msg.state == XaState::kPrepared) {
    on_vote(*t, p, ParticipantState::kPrepared);
  }
}

void Coordinator::recover_datasource(SiteId site) {
  std::vector<TxnId> undecided;
  for (auto& [tid, t] : txns_) {
    auto pit = t.parts.find(site);
    if (pit == t.parts.end() || !pit->second.contacted || pit->second.final) continue;
    if (t.phase == Phase::kCommitting || t.phase == Phase::kAborting) {
      send_decision(t, pit->second);
    } else if (!t.decided) {
      undecided.push_back(tid);
    }
  }
  for (TxnId tid : undecided) send(MsgKind::kQuery, site, tid);
  request_prepared_list(site);
}

void Coordinator::recover_middleware() {
  for (std::size_t s = 1; s < network_.profile().site_count(); ++s) {
    request_prepared_list(static_cast<SiteId>(s));
  }
}

void Coordinator::request_prepared_list(SiteId site) {
  pending_lists_.insert(site);
  Message m;
  m.kind = MsgKind::kListPrepared;
  m.src = kCoordinatorSite;
  m.dst = site;
  network_.send(std::move(m));
  after(
      3 * estimated_rtt(site) + 10 * kMicrosPerMilli,
      [this, site]() {
        if (pending_lists_.count(site) != 0) request_prepared_list(site);
      },
      "list_prepared_retry");
}

void Coordinator::on_prepared_list(const Message& msg) {
  if (pending_lists_.erase(msg.src) == 0) return;
  for (TxnId xid : msg.xids) {
    if (txns_.count(xid) == 0) resolve_orphan(msg.src, xid);
  }
}

void Coordinator::resolve_orphan(SiteId site, TxnId tid) {
  bool commit = false;
  if (const CommitLogRecord* rec = log_.find(tid)) {
    commit = rec->commit;
  } else if (config_.write_commit_log) {
    // No decision was ever logged: presume abort and make it durable.
    log_.append(CommitLogRecord{tid, false, kernel_.now(), {site}});
    emit(tid, "log abort");
  }
  RecoveryTask& task = recovery_[{site, tid}];
  task.commit = commit;
  task.gen = ++recovery_gen_;
  retry_orphan(site, tid, task.gen);
}

void Coordinator::retry_orphan(SiteId site, TxnId tid, std::uint64_t gen) {
  auto it = recovery_.find({site, tid});
  if (it == recovery_.end() || it->second.gen != gen) return;
  send(it->second.commit ? MsgKind::kCommit : MsgKind::kRollback, site, tid);
  after(
      3 * estimated_rtt(site) + 10 * kMicrosPerMilli,
      [this, site, tid, gen]() { retry_orphan(site, tid, gen); }, "orphan_retry");
}

void Coordinator::deliver(const Message& msg) {
  if (!up_) return;
  switch (msg.kind) {
    case MsgKind::kProbeReply:
      if (monitor_ != nullptr) monitor_->on_probe_reply(msg);
      return;
    case MsgKind::kReconnect:
      recover_datasource(msg.src);
      return;
    case MsgKind::kPreparedList:
      on_prepared_list(msg);
      return;
    case MsgKind::kQueryReply:
      on_query_reply(msg);
      return;
    default:
      break;
  }

  if (msg.kind == MsgKind::kRollbacked) {
    emit(msg.tid, "recv rollbacked " + std::to_string(msg.src));
  }
  Txn* t = find(msg.tid);
  if (t == nullptr) {
    if (msg.kind == MsgKind::kCommitted || msg.kind == MsgKind::kRollbacked) {
      recovery_.erase({msg.src, msg.tid});
    }
    return;
  }
  auto pit = t->parts.find(msg.src);
  if (pit == t->parts.end()) return;
  Participant& p = pit->second;

  switch (msg.kind) {
    case MsgKind::kResult:
      if (t->decided || !p.awaiting || msg.round != t->round) return;
      p.lel = msg.lel;
      on_round_reply(*t, p);
      return;
    case MsgKind::kPrepared:
    case MsgKind::kIdle:
      p.lel = msg.lel;
      on_vote(*t, p,
              msg.kind == MsgKind::kPrepared ? ParticipantState::kPrepared
                                             : ParticipantState::kIdle);
      return;
    case MsgKind::kFailure:
    case MsgKind::kRollbackOnly:
    case MsgKind::kVoteNo:
      on_failure(*t, p, msg);
      return;
    case MsgKind::kRollbacked:
      p.state = ParticipantState::kRollbacked;
      mark_final(*t, p, msg);
      if (!t->decided) {
        // An agent rolled back on a peer's request before the failing
        // site's own report arrived.
        for (auto& [site, q] : t->parts) q.agent_abort = true;
        decide(*t, false, msg.reason == AbortReason::kNone ? AbortReason::kPeerFailure : msg.reason);
        return;
      }
      if (t->commit && !t->txn.distributed()) {
        // A one-phase commit is not durable until acknowledged; the site
        // lost the unprepared work in a crash.
        t->commit = false;
        t->reason = AbortReason::kSiteFailure;
        t->phase = Phase::kAborting;
      }
      maybe_finish(*t);
      return;
    case MsgKind::kCommitted:
      p.state = ParticipantState::kCommitted;
      mark_final(*t, p, msg);
      maybe_finish(*t);
      return;
    default:
      throw ProtocolError(std::string("coordinator received unexpected message ") +
                          to_string(msg.kind));
  }
}

std::vector<TxnId> Coordinator::crash() {
  std::vector<TxnId> lost;
  for (auto& [tid, t] : txns_) {
    lost.push_back(tid);
    for (EventId id : t.pending_sends) kernel_.cancel(id);
    kernel_.cancel(t.watchdog);
  }
  emit(0, "crash");
  up_ = false;
  ++epoch_;
  txns_.clear();
  recovery_.clear();
  pending_lists_.clear();
  scheduler_.reset();
  if (monitor_ != nullptr) monitor_->reset();
  network_.set_up(kCoordinatorSite, false);
  return lost;
}

void Coordinator::restart() {
  if (up_) return;
  up_ = true;
  network_.set_up(kCoordinatorSite, true);
  emit(0, "restart");
  if (monitor_ != nullptr) monitor_->start();
  recover_middleware();
}

}  // namespace geotxn
