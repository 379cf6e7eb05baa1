#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "geotxn/geo_scheduler.h"
#include "geotxn/messages.h"
#include "geotxn/netmodel.h"
#include "geotxn/sim_kernel.h"
#include "geotxn/trace.h"

namespace geotxn {

struct Statement {
  SiteId site = 0;
  std::vector<Op> ops;
  bool is_last = false;
};

struct Transaction {
  TxnId tid = 0;
  std::vector<std::vector<Statement>> rounds;
  SimTime submit_time = 0;
  // The client asks for rollback instead of commit after the last round.
  bool client_abort = false;

  // Sorted, distinct.
  std::vector<SiteId> participants() const;
  bool distributed() const { return participants().size() > 1; }
  // Throws ProtocolError unless every participant has exactly one
  // statement flagged last and no statement follows it at that site.
  void validate() const;
};

enum class ParticipantState {
  kNotStarted,
  kExecuting,
  kIdle,
  kPrepared,
  kFailure,
  kRollbackOnly,
  kRollbacked,
  kCommitted,
};

const char* to_string(ParticipantState state);

struct CommitLogRecord {
  TxnId tid = 0;
  bool commit = false;
  SimTime logged_at = 0;
  std::vector<SiteId> participants;
};

// Append-once decision log; survives coordinator crashes.
class CommitLog {
 public:
  // Throws ProtocolError on a second record for the same tid.
  void append(CommitLogRecord record);
  const CommitLogRecord* find(TxnId tid) const;
  std::size_t size() const { return records_.size(); }
  const std::map<TxnId, CommitLogRecord>& records() const { return records_; }

 private:
  std::map<TxnId, CommitLogRecord> records_;
};

struct CoordinatorConfig {
  bool decentralized_prepare = true;
  bool early_abort = true;
  Duration log_flush = kMicrosPerMilli;
  // Used by the silent-participant watchdog: 3 * rtt + lock_wait_timeout.
  Duration lock_wait_timeout = 5 * kMicrosPerSecond;
  // Test hook: when false no decision is ever logged.
  bool write_commit_log = true;
};

struct TxnOutcome {
  TxnId tid = 0;
  bool committed = false;
  AbortReason reason = AbortReason::kNone;
  SimTime submit_time = 0;
  SimTime completion_time = 0;
  bool distributed = false;
  int wan_round_trips = 0;
  std::vector<Duration> lock_contention_spans;

  Duration latency() const { return completion_time - submit_time; }
};

/// The middleware transaction manager at site 0. Admits transactions
/// through the scheduler, dispatches each round's statements at their
/// assigned start offsets, runs the commit protocol, logs decisions and
/// recovers in-doubt subtransactions after crashes.
class Coordinator : public Endpoint {
 public:
  using OutcomeCallback = std::function<void(const TxnOutcome&)>;

  Coordinator(SimKernel& kernel, Network& network, CoordinatorConfig config,
              SchedulerConfig scheduler, RttMonitor* monitor = nullptr, Trace* trace = nullptr);

  // Called right after a decision is logged; returning true withholds
  // the dispatch (fault injection between flush and dispatch).
  using LogHook = std::function<bool(TxnId)>;

  void submit(Transaction txn, OutcomeCallback done);
  void set_log_hook(LogHook hook) { log_hook_ = std::move(hook); }
  void deliver(const Message& msg) override;

  // Loses all volatile state; returns the tids that were in flight.
  std::vector<TxnId> crash();
  void restart();
  // Asks every data source for in-doubt subtransactions and resolves
  // them from the log.
  void recover_middleware();
  // Re-drives every unfinished transaction that touched `site`.
  void recover_datasource(SiteId site);

  bool is_up() const { return up_; }
  // No transactions in flight and no recovery work pending.
  bool idle() const { return txns_.empty() && recovery_.empty() && pending_lists_.empty(); }
  std::size_t in_flight() const { return txns_.size(); }
  const CommitLog& log() const { return log_; }
  GeoScheduler& scheduler() { return scheduler_; }
  const CoordinatorConfig& config() const { return config_; }
  Duration estimated_rtt(SiteId site) const;

 private:
  enum class Phase { kAdmission, kExecuting, kVoting, kFlushing, kCommitting, kAborting };

  struct Participant {
    SiteId site = 0;
    ParticipantState state = ParticipantState::kNotStarted;
    bool contacted = false;
    bool final = false;
    // Statement of the current round still unanswered.
    bool awaiting = false;
    // Abort already being driven by the agents.
    bool agent_abort = false;
    std::vector<Key> admitted_keys;
    std::optional<Duration> lel;
    SubtxnTiming timing;
  };

  struct Txn {
    Transaction txn;
    OutcomeCallback done;
    Phase phase = Phase::kAdmission;
    std::size_t round = 0;
    int retry_cnt = 0;
    std::map<SiteId, Participant> parts;
    std::vector<EventId> pending_sends;
    bool decided = false;
    bool commit = false;
    AbortReason reason = AbortReason::kNone;
    int wan_round_trips = 0;
    EventId watchdog = 0;
  };

  struct RecoveryTask {
    bool commit = false;
    std::uint64_t gen = 0;
  };

  Txn* find(TxnId tid);
  void try_admit(TxnId tid);
  void schedule_round(Txn& t);
  void dispatch_round(Txn& t, const Schedule& schedule);
  void send_statement(TxnId tid, SiteId site, std::size_t round);
  void on_round_reply(Txn& t, Participant& p);
  void finish_execution(Txn& t);
  void on_vote(Txn& t, Participant& p, ParticipantState vote);
  void maybe_decide(Txn& t);
  void decide(Txn& t, bool commit, AbortReason reason);
  void apply_decision(TxnId tid);
  void send_decision(Txn& t, Participant& p);
  void on_failure(Txn& t, Participant& p, const Message& msg);
  void mark_final(Txn& t, Participant& p, const Message& msg);
  void maybe_finish(Txn& t);
  void arm_watchdog(Txn& t);
  void on_watchdog(TxnId tid);
  Duration watchdog_timeout(const Txn& t) const;
  void send(MsgKind kind, SiteId dst, TxnId tid);
  void on_query_reply(const Message& msg);
  void on_prepared_list(const Message& msg);
  void request_prepared_list(SiteId site);
  void resolve_orphan(SiteId site, TxnId tid);
  void retry_orphan(SiteId site, TxnId tid, std::uint64_t gen);
  void emit(TxnId tid, std::string event);
  template <class F>
  EventId after(Duration delay, F action, const char* label);

  SimKernel& kernel_;
  Network& network_;
  CoordinatorConfig config_;
  RttMonitor* monitor_;
  Trace* trace_;
  GeoScheduler scheduler_;
  CommitLog log_;
  bool up_ = true;
  std::uint64_t epoch_ = 0;
  std::map<TxnId, Txn> txns_;
  std::map<std::pair<SiteId, TxnId>, RecoveryTask> recovery_;
  std::set<SiteId> pending_lists_;
  std::uint64_t recovery_gen_ = 0;
  LogHook log_hook_;
};

}  // namespace geotxn
