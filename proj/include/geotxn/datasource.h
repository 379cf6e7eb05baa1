#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "geotxn/messages.h"
#include "geotxn/sim_kernel.h"
#include "geotxn/trace.h"
#include "geotxn/types.h"

namespace geotxn {

struct DataSourceConfig {
  Duration lock_wait_timeout = 5 * kMicrosPerSecond;
  Duration service_time = 100;  // per operation
};

enum class OpStatus { kDone, kLockTimeout };

struct OpResult {
  OpStatus status = OpStatus::kDone;
  std::int64_t value = 0;
};

enum class Vote { kYes, kNo };

struct SubtxnTiming {
  std::optional<SimTime> first_lock_at;
  std::optional<SimTime> last_unlock_at;

  std::optional<Duration> lock_contention_span() const {
    if (!first_lock_at || !last_unlock_at) return std::nullopt;
    return *last_unlock_at - *first_lock_at;
  }
};

/// A keyed record store under strict two-phase locking with FIFO wait
/// queues and a lock-wait timeout, exposing an XA-style subtransaction
/// state machine:
///
///   ACTIVE -> ENDED -> PREPARED -> {COMMITTED, ABORTED}
///   ACTIVE/ENDED -> ABORTED
///
/// Locks are released only when a subtransaction reaches a final state.
/// Writes are buffered and applied at commit (each committed write bumps
/// the record's version by one). PREPARED subtransactions and final
/// outcomes survive crash(); everything else is lost and aborted on
/// restart().
class DataSource {
 public:
  using OpCallback = std::function<void(OpResult)>;
  // granted == false reports a release.
  using LockObserver = std::function<void(TxnId, Key, LockMode, bool granted)>;

  DataSource(SimKernel& kernel, SiteId site, DataSourceConfig config, Trace* trace = nullptr);
  DataSource(const DataSource&) = delete;
  DataSource& operator=(const DataSource&) = delete;

  // Opens an ACTIVE subtransaction (no-op if already open). Returns false
  // if the xid already reached a final state, e.g. through a tombstone.
  bool begin(TxnId xid);

  // Acquires the record lock (reads shared, writes exclusive) and runs
  // the operation after the service time. `done` is invoked exactly once
  // unless the subtransaction is rolled back while the operation is
  // pending. Returns true when the lock was granted without waiting. On
  // lock-wait timeout the subtransaction is aborted before `done` runs.
  bool execute(TxnId xid, Op op, OpCallback done);

  bool end(TxnId xid);
  Vote prepare(TxnId xid);
  // Idempotent; returns the final state. Two-phase commit requires PREPARED.
  XaState commit(TxnId xid, bool one_phase = false);
  // Idempotent. Unknown xids leave an ABORTED tombstone.
  void rollback(TxnId xid);

  void crash();
  void restart();
  // Coordinator disconnect: abort everything that has not prepared.
  void abort_unprepared();

  bool is_up() const { return up_; }
  std::optional<XaState> state(TxnId xid) const;
  std::vector<TxnId> prepared_xids() const;
  SubtxnTiming timing(TxnId xid) const;
  std::int64_t value(Key key) const;
  std::size_t open_subtransactions() const { return subtxns_.size(); }
  std::size_t queue_length(Key key) const;
  std::vector<std::pair<TxnId, LockMode>> holders(Key key) const;

  void set_lock_observer(LockObserver observer) { observer_ = std::move(observer); }
  SiteId site() const { return site_; }
  const DataSourceConfig& config() const { return config_; }

 private:
  struct PendingOp {
    Op op;
    LockMode mode = LockMode::kShared;
    std::uint64_t request_id = 0;
    bool waiting = false;  // queued for the lock, otherwise in service
    OpCallback done;
  };
  struct Subtxn {
    XaState state = XaState::kActive;
    std::vector<std::pair<Key, LockMode>> held;
    std::vector<Key> writes;
    std::optional<SimTime> first_lock_at;
    std::optional<PendingOp> pending;
  };
  struct Final {
    XaState state = XaState::kAborted;
    SubtxnTiming timing;
  };
  struct Waiter {
    TxnId xid;
    LockMode mode;
    std::uint64_t request_id;
  };
  struct LockEntry {
    std::vector<std::pair<TxnId, LockMode>> holders;
    std::deque<Waiter> queue;
  };

  bool grantable(const LockEntry& entry, TxnId xid, LockMode mode) const;
  void grant(TxnId xid, Subtxn& sub, Key key, LockMode mode);
  void start_service(TxnId xid, Subtxn& sub);
  void process_queue(Key key);
  void on_lock_timeout(TxnId xid, std::uint64_t request_id);
  void finalize(TxnId xid, XaState final_state);
  void emit(TxnId xid, std::string event);

  SimKernel& kernel_;
  SiteId site_;
  DataSourceConfig config_;
  Trace* trace_;
  LockObserver observer_;

  bool up_ = true;
  std::uint64_t epoch_ = 0;
  SimTime crashed_at_ = 0;
  std::uint64_t next_request_ = 1;

  std::map<TxnId, Subtxn> subtxns_;
  std::unordered_map<Key, LockEntry> locks_;
  // Durable state.
  std::unordered_map<TxnId, Final> finals_;
  std::unordered_map<Key, std::int64_t> values_;
};

}  // namespace geotxn
