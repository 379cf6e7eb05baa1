#include "geotxn/coordinator.h"

#include <gtest/gtest.h>

#include <random>

#include "cluster.h"

namespace geotxn {
namespace {

using testing::Cluster;
using testing::ClusterOptions;
using testing::first_event;
using testing::one_round;
using testing::rd;
using testing::wr;

constexpr Duration kMs = kMicrosPerMilli;

ClusterOptions options(bool decentralized, bool scheduling = false) {
  ClusterOptions o;
  o.decentralized_prepare = decentralized;
  o.early_abort = decentralized;
  o.scheduling = scheduling;
  return o;
}

TEST(Coordinator, BaselineDistributedTakesThreeRoundTrips) {
  Cluster c(options(false));
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}}));
  c.kernel.run();
  const auto o = c.outcome(1);
  ASSERT_TRUE(o && o->committed);
  EXPECT_EQ(o->latency(), 300 * kMs + kMs);
  EXPECT_EQ(o->wan_round_trips, 3);
  ASSERT_NE(c.dm->log().find(1), nullptr);
  EXPECT_TRUE(c.dm->log().find(1)->commit);
}

TEST(Coordinator, DecentralizedPrepareSavesOneRoundTrip) {
  Cluster c(options(true));
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}}));
  c.kernel.run();
  const auto o = c.outcome(1);
  ASSERT_TRUE(o && o->committed);
  EXPECT_EQ(o->latency(), 200 * kMs + kMs + 2 * 500);
  EXPECT_EQ(o->wan_round_trips, 2);
}

TEST(Coordinator, CentralizedCommitsInOnePhaseWithoutLog) {
  for (bool dec : {false, true}) {
    Cluster c(options(dec));
    c.submit(one_round(1, {{1, {wr(1), rd(2)}}}));
    c.kernel.run();
    const auto o = c.outcome(1);
    ASSERT_TRUE(o && o->committed);
    // Execution round trip, then a single commit round trip.
    EXPECT_EQ(o->latency(), 20 * kMs + (dec ? 1000 : 0));
    EXPECT_EQ(o->wan_round_trips, 2);
    EXPECT_EQ(c.dm->log().size(), 0u);
    EXPECT_EQ(c.source(1).value(1), 1);
  }
}

// T1 touches r on DS1 and a record on DS2; T2 is centralized on r and
// arrives 5 ms later.
struct LcsScenario {
  explicit LcsScenario(ClusterOptions o) : c(o) {
    c.submit(one_round(1, {{1, {wr(r)}}, {2, {wr(100)}}}));
    c.submit_at(5 * kMs, one_round(2, {{1, {wr(r)}}}));
    c.kernel.run();
  }
  Duration lcs(SiteId site, TxnId tid) const {
    return *c.sources[static_cast<std::size_t>(site - 1)]->timing(tid).lock_contention_span();
  }
  static constexpr Key r = 1;
  Cluster c;
};

TEST(Coordinator, BaselineHoldsNearRecordForTwoRoundTrips) {
  LcsScenario s(options(false));
  EXPECT_NEAR(s.lcs(1, 1), 200 * kMs, 3 * kMs);
  // T21 waits for T11's release.
  EXPECT_GT(s.c.outcome(2)->latency(), 200 * kMs);
}

TEST(Coordinator, DecentralizedPrepareHalvesNearLockSpan) {
  LcsScenario s(options(true));
  EXPECT_NEAR(s.lcs(1, 1), 100 * kMs, 3 * kMs);
}

TEST(Coordinator, SchedulingAlignsLockSpans) {
  LcsScenario s(options(true, true));
  EXPECT_NEAR(s.lcs(1, 1), 10 * kMs, 3 * kMs);
  EXPECT_NEAR(s.lcs(2, 1), 100 * kMs, 3 * kMs);
  EXPECT_NEAR(s.lcs(1, 2), 10 * kMs, 3 * kMs);
  EXPECT_TRUE(s.c.outcome(1)->committed);
  EXPECT_TRUE(s.c.outcome(2)->committed);
  // Postponed by 90 ms: the statement reaches DS1 at 95 ms.
  EXPECT_EQ(first_event(s.c.trace, 1, 1, "begin"), 95 * kMs);
}

TEST(Coordinator, OutcomeReportsLockSpans) {
  LcsScenario s(options(true, true));
  auto spans = s.c.outcome(1)->lock_contention_spans;
  std::sort(spans.begin(), spans.end());
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], s.lcs(1, 1));
  EXPECT_EQ(spans[1], s.lcs(2, 1));
}

// With zero jitter and accurate RTTs, postponement never delays commit.
TEST(Coordinator, SchedulingNeverDelaysCompletion) {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> rtts;
    const int n = 2 + static_cast<int>(gen() % 3);
    for (int s = 0; s < n; ++s) rtts.push_back(static_cast<double>(2 * (gen() % 150)));
    std::vector<std::pair<SiteId, std::vector<Op>>> parts;
    for (SiteId s = 1; s <= n; ++s) parts.push_back({s, {wr(s)}});
    SimTime done[2];
    for (int sched = 0; sched < 2; ++sched) {
      ClusterOptions o = options(true, sched == 1);
      o.rtt_ms = rtts;
      Cluster c(o);
      c.submit(one_round(1, parts));
      c.kernel.run();
      ASSERT_TRUE(c.outcome(1)->committed);
      done[sched] = c.outcome(1)->completion_time;
    }
    EXPECT_LE(done[1], done[0]);
  }
}

TEST(Coordinator, MultiRoundTransactionRunsRoundsInOrder) {
  Cluster c(options(true));
  Transaction t;
  t.tid = 1;
  t.rounds.push_back({Statement{1, {wr(1)}, false}, Statement{2, {wr(2)}, false}});
  t.rounds.push_back({Statement{1, {wr(3)}, true}, Statement{2, {wr(4)}, true}});
  c.submit(t);
  c.kernel.run();
  const auto o = c.outcome(1);
  ASSERT_TRUE(o && o->committed);
  EXPECT_EQ(o->wan_round_trips, 3);
  EXPECT_EQ(c.source(2).value(4), 1);
}

TEST(Coordinator, FailureAbortsEverywhere) {
  ClusterOptions o = options(false);
  o.lock_wait_timeout = 20 * kMs;
  Cluster c(o);
  c.source(2).begin(99);
  c.source(2).execute(99, wr(7), [](OpResult) {});
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(7)}}}));
  c.kernel.run_until(kMicrosPerSecond);
  const auto out = c.outcome(1);
  ASSERT_TRUE(out && !out->committed);
  EXPECT_EQ(out->reason, AbortReason::kLockTimeout);
  EXPECT_EQ(c.source(1).state(1), XaState::kAborted);
  EXPECT_EQ(c.source(1).value(1), 0);
  ASSERT_NE(c.dm->log().find(1), nullptr);
  EXPECT_FALSE(c.dm->log().find(1)->commit);
}

// Abort completion after a failure at the far site: one WAN round trip
// with peer notification, one and a half without.
TEST(Coordinator, EarlyAbortSavesHalfRoundTrip) {
  Duration span[2];
  for (int early = 0; early < 2; ++early) {
    ClusterOptions o = options(early == 1);
    o.rtt_ms = {100, 100};
    o.lock_wait_timeout = 20 * kMs;
    o.log_flush = 0;
    Cluster c(o);
    c.source(2).begin(99);
    c.source(2).execute(99, wr(7), [](OpResult) {});
    c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(7)}}}));
    c.kernel.run_until(kMicrosPerSecond);
    const auto out = c.outcome(1);
    ASSERT_TRUE(out && !out->committed);
    // Failure happens when the statement has waited out the timeout.
    span[early] = out->completion_time - (50 * kMs + 20 * kMs);
  }
  EXPECT_NEAR(static_cast<double>(span[1]), 100.0 * kMs, 2.0 * kMs);
  EXPECT_NEAR(static_cast<double>(span[0]), 150.0 * kMs, 2.0 * kMs);
}

TEST(Coordinator, ClientAbortRollsBack) {
  Cluster c(options(true));
  Transaction t = one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}});
  t.client_abort = true;
  c.submit(t);
  c.kernel.run();
  ASSERT_FALSE(c.outcome(1)->committed);
  EXPECT_EQ(c.outcome(1)->reason, AbortReason::kClient);
  EXPECT_EQ(c.source(2).value(2), 0);
}

TEST(Coordinator, AdmissionAbortsAfterTenDelays) {
  ClusterOptions o = options(true, true);
  o.adv_opt = true;
  Cluster c(o);
  GeoScheduler& s = c.dm->scheduler();
  s.admit({5});
  s.update_footprint({5}, std::nullopt, false);
  s.admit({5});
  s.admit({5});
  c.submit(one_round(1, {{1, {wr(5)}}, {2, {wr(6)}}}));
  c.kernel.run();
  const auto out = c.outcome(1);
  ASSERT_TRUE(out && !out->committed);
  EXPECT_EQ(out->reason, AbortReason::kAdmission);
  int delays = 0;
  for (const auto& e : c.trace.events()) delays += e.tid == 1 && e.event == "admission_delay";
  EXPECT_EQ(delays, 10);
  EXPECT_EQ(c.source(1).state(1), std::nullopt);
}

TEST(Coordinator, CrashAfterLogCommitsOnRecovery) {
  Cluster c(options(true));
  bool crashed = false;
  c.dm->set_log_hook([&](TxnId) {
    crashed = true;
    c.kernel.schedule_after(0, [&] { c.dm->crash(); });
    return true;
  });
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}}));
  c.kernel.run_until(500 * kMs);
  ASSERT_TRUE(crashed);
  EXPECT_FALSE(c.outcome(1).has_value());
  EXPECT_EQ(c.source(1).state(1), XaState::kPrepared);
  c.dm->set_log_hook(nullptr);
  c.dm->restart();
  c.kernel.run();
  EXPECT_EQ(c.source(1).state(1), XaState::kCommitted);
  EXPECT_EQ(c.source(2).state(1), XaState::kCommitted);
  EXPECT_TRUE(c.dm->idle());
}

TEST(Coordinator, CrashBeforeLogAbortsOnRecovery) {
  Cluster c(options(true));
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}}));
  // DS1 has prepared, DS2 has not received its statement yet.
  c.kernel.run_until(20 * kMs);
  EXPECT_EQ(c.dm->crash(), std::vector<TxnId>{1});
  for (SiteId s : {1, 2}) c.agent(s).on_coordinator_disconnect();
  c.kernel.run_until(200 * kMs);
  c.dm->restart();
  c.kernel.run();
  EXPECT_EQ(c.source(1).state(1), XaState::kAborted);
  EXPECT_NE(c.source(2).state(1), XaState::kCommitted);
  ASSERT_NE(c.dm->log().find(1), nullptr);
  EXPECT_FALSE(c.dm->log().find(1)->commit);
}

TEST(Coordinator, CrashWithNothingInFlightIsHarmless) {
  Cluster c(options(true));
  EXPECT_TRUE(c.dm->crash().empty());
  EXPECT_THROW(c.submit(one_round(1, {{1, {wr(1)}}})), ProtocolError);
  c.dm->restart();
  c.kernel.run();
  EXPECT_TRUE(c.dm->idle());
  EXPECT_EQ(c.dm->log().size(), 0u);
}

TEST(Coordinator, SiteCrashMidExecutionAbortsTransaction) {
  Cluster c(options(true));
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}}));
  c.kernel.run_until(30 * kMs);
  c.agent(2).crash();
  c.kernel.run_until(300 * kMs);
  c.agent(2).restart();
  c.kernel.run();
  const auto out = c.outcome(1);
  ASSERT_TRUE(out && !out->committed);
  EXPECT_EQ(c.source(1).state(1), XaState::kAborted);
  EXPECT_EQ(c.source(2).state(1), XaState::kAborted);
}

TEST(Coordinator, SiteCrashAfterPrepareGetsCommitRedelivered) {
  Cluster c(options(true));
  c.submit(one_round(1, {{1, {wr(1)}}, {2, {wr(2)}}}));
  // DS2 prepares at ~51 ms; the commit would reach it at ~152 ms.
  c.kernel.run_until(120 * kMs);
  ASSERT_EQ(c.source(2).state(1), XaState::kPrepared);
  c.agent(2).crash();
  c.kernel.run_until(400 * kMs);
  EXPECT_FALSE(c.outcome(1).has_value());
  c.agent(2).restart();
  c.kernel.run();
  ASSERT_TRUE(c.outcome(1) && c.outcome(1)->committed);
  EXPECT_EQ(c.source(2).state(1), XaState::kCommitted);
  EXPECT_EQ(c.source(2).value(2), 1);
}

TEST(Coordinator, OnePhaseCommitLostInCrashReportsAbort) {
  Cluster c(options(true));
  c.submit(one_round(1, {{2, {wr(2)}}}));
  // DS2 is idle at ~51 ms; the one-phase commit would reach it at ~152 ms.
  c.kernel.run_until(120 * kMs);
  ASSERT_EQ(c.source(2).state(1), XaState::kEnded);
  c.agent(2).crash();
  c.kernel.run_until(400 * kMs);
  c.agent(2).restart();
  c.kernel.run();
  const auto out = c.outcome(1);
  ASSERT_TRUE(out.has_value());
  EXPECT_FALSE(out->committed);
  EXPECT_EQ(out->reason, AbortReason::kSiteFailure);
  EXPECT_EQ(c.source(2).value(2), 0);
}

TEST(Coordinator, SiteCrashWithNothingInFlight) {
  Cluster c(options(true));
  c.agent(1).crash();
  c.agent(1).restart();
  c.kernel.run();
  EXPECT_TRUE(c.dm->idle());
}

TEST(Transaction, ValidationRejectsMalformedShapes) {
  Transaction t;
  EXPECT_THROW(t.validate(), ProtocolError);
  t.rounds.push_back({Statement{1, {wr(1)}, false}});
  EXPECT_THROW(t.validate(), ProtocolError);
  t.rounds.push_back({Statement{1, {wr(2)}, true}});
  EXPECT_NO_THROW(t.validate());
  t.rounds.push_back({Statement{1, {wr(3)}, true}});
  EXPECT_THROW(t.validate(), ProtocolError);
}

TEST(Transaction, ParticipantsSortedDistinct) {
  Transaction t = one_round(1, {{3, {wr(1)}}, {1, {wr(2)}}});
  EXPECT_EQ(t.participants(), (std::vector<SiteId>{1, 3}));
  EXPECT_TRUE(t.distributed());
}

TEST(CommitLog, AppendOnce) {
  CommitLog log;
  log.append({1, true, 0, {1, 2}});
  EXPECT_THROW(log.append({1, false, 5, {1, 2}}), ProtocolError);
  EXPECT_TRUE(log.find(1)->commit);
  EXPECT_EQ(log.find(2), nullptr);
}

}  // namespace
}  // namespace geotxn
