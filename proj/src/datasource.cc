#include "geotxn/datasource.h"

#include <algorithm>
#include <string>

namespace geotxn {
namespace {

const char* mode_token(LockMode mode) { return mode == LockMode::kShared ? "S" : "X"; }

}  // namespace

DataSource::DataSource(SimKernel& kernel, SiteId site, DataSourceConfig config, Trace* trace)
    : kernel_(kernel), site_(site), config_(config), trace_(trace) {
  if (config_.lock_wait_timeout <= 0) throw ConfigError("lock_wait_timeout must be positive");
  if (config_.service_time < 0) throw ConfigError("service_time must be >= 0");
}

void DataSource::emit(TxnId xid, std::string event) {
  if (trace_ != nullptr) trace_->emit(kernel_.now(), xid, site_, std::move(event));
}

bool DataSource::begin(TxnId xid) {
  if (finals_.count(xid) != 0) return false;
  if (subtxns_.count(xid) != 0) return true;
  subtxns_.emplace(xid, Subtxn{});
  emit(xid, "begin");
  return true;
}

bool DataSource::grantable(const LockEntry& entry, TxnId xid, LockMode mode) const {
  for (const auto& [holder, held_mode] : entry.holders) {
    if (holder == xid) continue;
    if (mode == LockMode::kExclusive || held_mode == LockMode::kExclusive) return false;
  }
  return true;
}

bool DataSource::execute(TxnId xid, Op op, OpCallback done) {
  auto it = subtxns_.find(xid);
  if (it == subtxns_.end() || it->second.state != XaState::kActive) {
    throw ProtocolError("execute on a subtransaction that is not ACTIVE");
  }
  Subtxn& sub = it->second;
  if (sub.pending) throw ProtocolError("execute while another operation is pending");

  const LockMode mode = op.write ? LockMode::kExclusive : LockMode::kShared;
  sub.pending = PendingOp{op, mode, next_request_++, false, std::move(done)};

  // Re-entrant request on a key this subtransaction already covers.
  for (const auto& [key, held_mode] : sub.held) {
    if (key == op.key && (held_mode == LockMode::kExclusive || mode == LockMode::kShared)) {
      start_service(xid, sub);
      return true;
    }
  }

  LockEntry& entry = locks_[op.key];
  if (entry.queue.empty() && grantable(entry, xid, mode)) {
    grant(xid, sub, op.key, mode);
    start_service(xid, sub);
    return true;
  }

  sub.pending->waiting = true;
  const std::uint64_t request_id = sub.pending->request_id;
  entry.queue.push_back(Waiter{xid, mode, request_id});
  const std::uint64_t epoch = epoch_;
  kernel_.schedule_after(
      config_.lock_wait_timeout,
      [this, xid, request_id, epoch]() {
        if (epoch == epoch_) on_lock_timeout(xid, request_id);
      },
      "lock_timeout", site_);
  return false;
}

void DataSource::grant(TxnId xid, Subtxn& sub, Key key, LockMode mode) {
  LockEntry& entry = locks_[key];
  bool upgraded = false;
  for (auto& holder : entry.holders) {
    if (holder.first == xid) {
      holder.second = LockMode::kExclusive;
      upgraded = true;
    }
  }
  if (!upgraded) entry.holders.emplace_back(xid, mode);

  bool recorded = false;
  for (auto& held : sub.held) {
    if (held.first == key) {
      held.second = mode;
      recorded = true;
    }
  }
  if (!recorded) sub.held.emplace_back(key, mode);

  if (!sub.first_lock_at) sub.first_lock_at = kernel_.now();
  emit(xid, std::string("lock ") + std::to_string(key) + ' ' + mode_token(mode));
  if (observer_) observer_(xid, key, mode, true);
}

void DataSource::start_service(TxnId xid, Subtxn& sub) {
  sub.pending->waiting = false;
  const std::uint64_t request_id = sub.pending->request_id;
  const std::uint64_t epoch = epoch_;
  kernel_.schedule_after(
      config_.service_time,
      [this, xid, request_id, epoch]() {
        if (epoch != epoch_) return;
        auto it = subtxns_.find(xid);
        if (it == subtxns_.end()) return;
        Subtxn& s = it->second;
        if (s.state != XaState::kActive || !s.pending || s.pending->request_id != request_id ||
            s.pending->waiting) {
          return;
        }
        PendingOp op = std::move(*s.pending);
        s.pending.reset();
        if (op.op.write) s.writes.push_back(op.op.key);
        OpResult result{OpStatus::kDone, value(op.op.key)};
        op.done(result);
      },
      "op_done", site_);
}

void DataSource::process_queue(Key key) {
  auto it = locks_.find(key);
  if (it == locks_.end()) return;
  LockEntry& entry = it->second;
  while (!entry.queue.empty()) {
    const Waiter w = entry.queue.front();
    if (!grantable(entry, w.xid, w.mode)) break;
    entry.queue.pop_front();
    auto sit = subtxns_.find(w.xid);
    if (sit == subtxns_.end() || !sit->second.pending ||
        sit->second.pending->request_id != w.request_id) {
      continue;
    }
    grant(w.xid, sit->second, key, w.mode);
    start_service(w.xid, sit->second);
  }
  if (entry.holders.empty() && entry.queue.empty()) locks_.erase(it);
}

void DataSource::on_lock_timeout(TxnId xid, std::uint64_t request_id) {
  auto it = subtxns_.find(xid);
  if (it == subtxns_.end()) return;
  Subtxn& sub = it->second;
  if (!sub.pending || sub.pending->request_id != request_id || !sub.pending->waiting) return;
  OpCallback done = std::move(sub.pending->done);
  finalize(xid, XaState::kAborted);
  done(OpResult{OpStatus::kLockTimeout, 0});
}

void DataSource::finalize(TxnId xid, XaState final_state) {
  auto it = subtxns_.find(xid);
  if (it == subtxns_.end()) return;
  Subtxn sub = std::move(it->second);
  subtxns_.erase(it);

  std::vector<Key> touched;
  if (sub.pending && sub.pending->waiting) {
    const Key key = sub.pending->op.key;
    if (auto lit = locks_.find(key); lit != locks_.end()) {
      auto& q = lit->second.queue;
      q.erase(std::remove_if(q.begin(), q.end(),
                             [&](const Waiter& w) { return w.xid == xid; }),
              q.end());
      touched.push_back(key);
    }
  }

  Final fin;
  fin.state = final_state;
  fin.timing.first_lock_at = sub.first_lock_at;
  if (sub.first_lock_at) fin.timing.last_unlock_at = up_ ? kernel_.now() : crashed_at_;

  for (const auto& [key, mode] : sub.held) {
    auto lit = locks_.find(key);
    if (lit == locks_.end()) continue;
    auto& holders = lit->second.holders;
    holders.erase(std::remove_if(holders.begin(), holders.end(),
                                 [&](const auto& h) { return h.first == xid; }),
                  holders.end());
    if (observer_) observer_(xid, key, mode, false);
    touched.push_back(key);
  }

  if (final_state == XaState::kCommitted) {
    for (Key key : sub.writes) ++values_[key];
  }
  finals_[xid] = fin;
  emit(xid, final_state == XaState::kCommitted ? "final committed" : "final aborted");

  for (Key key : touched) process_queue(key);
}

bool DataSource::end(TxnId xid) {
  auto it = subtxns_.find(xid);
  if (it == subtxns_.end()) return false;
  Subtxn& sub = it->second;
  if (sub.state == XaState::kActive) {
    if (sub.pending) throw ProtocolError("end while an operation is pending");
    sub.state = XaState::kEnded;
  }
  return true;
}

Vote DataSource::prepare(TxnId xid) {
  if (auto fit = finals_.find(xid); fit != finals_.end()) {
    return fit->second.state == XaState::kCommitted ? Vote::kYes : Vote::kNo;
  }
  auto it = subtxns_.find(xid);
  if (it == subtxns_.end()) {
    // Never seen here: leave a tombstone so a late statement is refused.
    finals_[xid] = Final{};
    emit(xid, "final aborted");
    return Vote::kNo;
  }
  Subtxn& sub = it->second;
  switch (sub.state) {
    case XaState::kEnded:
      sub.state = XaState::kPrepared;
      emit(xid, "prepared");
      return Vote::kYes;
    case XaState::kPrepared:
      return Vote::kYes;
    default:
      throw ProtocolError("prepare before end");
  }
}

XaState DataSource::commit(TxnId xid, bool one_phase) {
  if (auto fit = finals_.find(xid); fit != finals_.end()) return fit->second.state;
  auto it = subtxns_.find(xid);
  if (it == subtxns_.end()) {
    if (!one_phase) throw ProtocolError("two-phase commit of an unknown subtransaction");
    finals_[xid] = Final{};
    emit(xid, "final aborted");
    return XaState::kAborted;
  }
  Subtxn& sub = it->second;
  if (sub.state == XaState::kPrepared ||
      (one_phase && (sub.state == XaState::kEnded ||
                     (sub.state == XaState::kActive && !sub.pending)))) {
    finalize(xid, XaState::kCommitted);
    return XaState::kCommitted;
  }
  throw ProtocolError("commit of a subtransaction that is not PREPARED");
}

void DataSource::rollback(TxnId xid) {
  if (finals_.count(xid) != 0) return;
  if (subtxns_.count(xid) == 0) {
    finals_[xid] = Final{};
    emit(xid, "final aborted");
    return;
  }
  finalize(xid, XaState::kAborted);
}

void DataSource::crash() {
  if (!up_) return;
  up_ = false;
  ++epoch_;
  crashed_at_ = kernel_.now();
  locks_.clear();
  for (auto& [xid, sub] : subtxns_) {
    sub.pending.reset();
    if (sub.state != XaState::kPrepared) sub.held.clear();
  }
}

void DataSource::restart() {
  if (up_) return;
  up_ = true;
  std::vector<TxnId> lost;
  for (auto& [xid, sub] : subtxns_) {
    if (sub.state == XaState::kPrepared) {
      for (const auto& [key, mode] : sub.held) locks_[key].holders.emplace_back(xid, mode);
    } else {
      lost.push_back(xid);
    }
  }
  for (TxnId xid : lost) {
    auto& sub = subtxns_.at(xid);
    if (sub.first_lock_at) {
      // Locks vanished with the crash.
      Final fin;
      fin.timing.first_lock_at = sub.first_lock_at;
      fin.timing.last_unlock_at = crashed_at_;
      subtxns_.erase(xid);
      finals_[xid] = fin;
      emit(xid, "final aborted");
    } else {
      finalize(xid, XaState::kAborted);
    }
  }
}

void DataSource::abort_unprepared() {
  if (!up_) return;
  std::vector<TxnId> victims;
  for (const auto& [xid, sub] : subtxns_) {
    if (sub.state == XaState::kActive || sub.state == XaState::kEnded) victims.push_back(xid);
  }
  for (TxnId xid : victims) finalize(xid, XaState::kAborted);
}

std::optional<XaState> DataSource::state(TxnId xid) const {
  if (auto it = subtxns_.find(xid); it != subtxns_.end()) return it->second.state;
  if (auto it = finals_.find(xid); it != finals_.end()) return it->second.state;
  return std::nullopt;
}

std::vector<TxnId> DataSource::prepared_xids() const {
  std::vector<TxnId> out;
  for (const auto& [xid, sub] : subtxns_) {
    if (sub.state == XaState::kPrepared) out.push_back(xid);
  }
  return out;
}

SubtxnTiming DataSource::timing(TxnId xid) const {
  if (auto it = finals_.find(xid); it != finals_.end()) return it->second.timing;
  if (auto it = subtxns_.find(xid); it != subtxns_.end()) {
    return SubtxnTiming{it->second.first_lock_at, std::nullopt};
  }
  return {};
}

std::int64_t DataSource::value(Key key) const {
  auto it = values_.find(key);
  return it == values_.end() ? 0 : it->second;
}

std::size_t DataSource::queue_length(Key key) const {
  auto it = locks_.find(key);
  return it == locks_.end() ? 0 : it->second.queue.size();
}

std::vector<std::pair<TxnId, LockMode>> DataSource::holders(Key key) const {
  auto it = locks_.find(key);
  if (it == locks_.end()) return {};
  return it->second.holders;
}

}  // namespace geotxn
