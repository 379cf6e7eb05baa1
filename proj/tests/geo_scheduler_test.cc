#include "geotxn/geo_scheduler.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "geotxn/footprint.h"
#include "oracles.h"

namespace geotxn {
namespace {

constexpr double kMs = 1000.0;

GeoScheduler make(SchedulerConfig cfg, std::map<SiteId, Duration> rtts, double draw = 0.5) {
  return GeoScheduler(
      cfg, [rtts](SiteId s) { return rtts.at(s); }, [draw] { return draw; });
}

using testing::brute_abort;
using testing::brute_adv;
using testing::brute_basic;
using testing::Counters;

TEST(OptimalStart, PostponesNearSiteByRttGap) {
  EXPECT_DOUBLE_EQ(optimal_start_basic({{1, 10 * kMs}, {2, 100 * kMs}}, 1), 90 * kMs);
  EXPECT_DOUBLE_EQ(optimal_start_basic({{1, 10 * kMs}, {2, 100 * kMs}}, 2), 0);
}

TEST(OptimalStart, EqualRttsGiveZero) {
  const std::map<SiteId, double> r{{1, 40}, {2, 40}, {3, 40}};
  for (SiteId s = 1; s <= 3; ++s) EXPECT_EQ(optimal_start_basic(r, s), 0);
}

TEST(OptimalStart, AdvancedFoldsForecastLatency) {
  const std::map<SiteId, double> r{{1, 10 * kMs}, {2, 100 * kMs}};
  const std::map<SiteId, double> l{{1, 5 * kMs}, {2, 20 * kMs}};
  EXPECT_DOUBLE_EQ(optimal_start_adv(r, l, 1), 105 * kMs);
  EXPECT_DOUBLE_EQ(optimal_start_adv(r, l, 2), 0);
}

TEST(OptimalStart, RejectsUnknownTargetAndNegativeRtt) {
  EXPECT_THROW(optimal_start_basic({{1, 1}}, 2), std::invalid_argument);
  EXPECT_THROW(optimal_start_basic({{1, -1}}, 1), std::invalid_argument);
  EXPECT_THROW(optimal_start_adv({{1, 1}}, {}, 1), std::invalid_argument);
}

TEST(OptimalStart, MatchesBruteForceOnRandomInputs) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> rtt(0, 500 * kMs);
  std::uniform_real_distribution<double> lel(0, 200 * kMs);
  for (int i = 0; i < 10000; ++i) {
    const int n = 1 + static_cast<int>(gen() % 6);
    std::map<SiteId, double> r, l, zero;
    for (SiteId s = 1; s <= n; ++s) {
      r[s] = rtt(gen);
      l[s] = lel(gen);
      zero[s] = 0;
    }
    int zeros_basic = 0, zeros_adv = 0;
    for (SiteId s = 1; s <= n; ++s) {
      const double b = optimal_start_basic(r, s);
      const double a = optimal_start_adv(r, l, s);
      ASSERT_NEAR(b, brute_basic(r, s), 1e-9);
      ASSERT_NEAR(a, brute_adv(r, l, s), 1e-9);
      ASSERT_EQ(optimal_start_adv(r, zero, s), b);
      ASSERT_GE(b, 0);
      ASSERT_GE(a, 0);
      // Postponed start lines up with the slowest participant.
      ASSERT_NEAR(b + r[s], brute_basic(r, s) + r[s], 1e-9);
      zeros_basic += b == 0;
      zeros_adv += a == 0;
    }
    ASSERT_GE(zeros_basic, 1);
    ASSERT_GE(zeros_adv, 1);
  }
}

TEST(AbortProbability, SpecExamples) {
  SchedulerConfig cfg;
  auto s = make(cfg, {});
  EXPECT_EQ(s.abort_probability({}), 0.0);
  s.admit({1});
  EXPECT_EQ(s.abort_probability({1}), 0.0);  // a_cnt 1

  // c/t = 0.5 with a_cnt = 3.
  auto g = make(cfg, {});
  g.admit({7});
  g.admit({7});
  g.update_footprint({7}, std::nullopt, true);
  g.update_footprint({7}, std::nullopt, false);
  g.admit({7});
  g.admit({7});
  g.admit({7});
  const HotspotEntry* e = g.footprint().find(7);
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->t_cnt, 2u);
  EXPECT_EQ(e->c_cnt, 1u);
  EXPECT_EQ(e->a_cnt, 3);
  EXPECT_NEAR(g.abort_probability({7}), 0.75, 1e-12);
}

TEST(AbortProbability, PerfectHistoryIsZero) {
  auto s = make(SchedulerConfig{}, {});
  for (int i = 0; i < 4; ++i) {
    s.admit({3});
    s.update_footprint({3}, std::nullopt, true);
  }
  for (int i = 0; i < 6; ++i) s.admit({3});
  EXPECT_EQ(s.footprint().find(3)->a_cnt, 6);
  EXPECT_EQ(s.abort_probability({3}), 0.0);
}

// Builds a footprint with prescribed counters through the public API and
// compares against the explicit product.
TEST(AbortProbability, MatchesBruteForceOnRandomFootprints) {
  std::mt19937_64 gen(5);
  for (int iter = 0; iter < 10000; ++iter) {
    SchedulerConfig cfg;
    auto s = make(cfg, {});
    const int nkeys = 1 + static_cast<int>(gen() % 4);
    std::vector<Counters> want;
    std::vector<Key> keys;
    for (Key k = 0; k < nkeys; ++k) {
      const std::uint64_t done = gen() % 6;
      const std::uint64_t commits = done == 0 ? 0 : gen() % (done + 1);
      const std::int64_t active = static_cast<std::int64_t>(gen() % 6);
      for (std::uint64_t i = 0; i < done; ++i) {
        s.admit({k});
        s.update_footprint({k}, std::nullopt, i < commits);
      }
      for (std::int64_t i = 0; i < active; ++i) s.admit({k});
      want.push_back({done, commits, active});
      keys.push_back(k);
    }
    ASSERT_NEAR(s.abort_probability(keys), brute_abort(want), 1e-9);
  }
}

TEST(AbortProbability, MonotoneInActiveCountAndCommitRatio) {
  std::mt19937_64 gen(8);
  for (int iter = 0; iter < 2000; ++iter) {
    const std::uint64_t t = 1 + gen() % 20;
    const std::uint64_t c = gen() % (t + 1);
    const std::int64_t a = static_cast<std::int64_t>(gen() % 10);
    const double base = brute_abort({{t, c, a}});
    EXPECT_LE(base, brute_abort({{t, c, a + 1}}) + 1e-15);
    if (c < t) {
      EXPECT_GE(base + 1e-15, brute_abort({{t, c + 1, a}}));
    }
  }
  // And the implementation agrees at both ends of each step.
  auto s = make(SchedulerConfig{}, {});
  double prev = 0;
  s.admit({1});
  s.update_footprint({1}, std::nullopt, false);
  s.admit({1});
  s.update_footprint({1}, std::nullopt, true);
  for (int a = 0; a < 8; ++a) {
    const double p = s.abort_probability({1});
    EXPECT_GE(p, prev);
    prev = p;
    s.admit({1});
  }
}

TEST(Footprint, UpdateFollowsWeightedAverage) {
  SchedulerConfig cfg;
  cfg.alpha = 0.8;
  auto s = make(cfg, {});
  // Seed w_lat = 10 ms on two keys so the split is 0.5 each.
  s.update_footprint({1, 2}, 50000, false);
  s.update_footprint({1, 2}, 50000, false);
  auto w1 = s.footprint().find(1)->w_lat;
  ASSERT_DOUBLE_EQ(w1, 0.2 * 25000 * 0.8 + 0.2 * 25000);  // 9000
  // Direct formula: new = alpha*old + (1-alpha)*lel*w.
  const double old = w1;
  s.update_footprint({1, 2}, 20000, false);
  EXPECT_DOUBLE_EQ(s.footprint().find(1)->w_lat, 0.8 * old + 0.2 * 20000 * 0.5);
}

TEST(Footprint, TenMillisecondExample) {
  // old 10 ms, sample 20 ms, weight 0.5 -> 10 ms.
  SchedulerConfig cfg;
  cfg.alpha = 0.8;
  auto s = make(cfg, {});
  // Two keys of equal w_lat 10 ms: one update of 100 ms across two keys
  // from zero gives 0.2 * 100 * 0.5 = 10 ms each.
  s.update_footprint({1, 2}, 100000, false);
  ASSERT_DOUBLE_EQ(s.footprint().find(1)->w_lat, 10000);
  s.update_footprint({1, 2}, 20000, false);
  EXPECT_DOUBLE_EQ(s.footprint().find(1)->w_lat, 10000);
}

TEST(Footprint, AlphaOneFreezesLatency) {
  SchedulerConfig cfg;
  cfg.alpha = 1.0;
  auto s = make(cfg, {});
  s.update_footprint({1}, 40000, false);
  EXPECT_EQ(s.footprint().find(1)->w_lat, 0.0);
}

TEST(Footprint, SingleColdKeyTakesWholeSample) {
  SchedulerConfig cfg;
  cfg.alpha = 0.8;
  auto s = make(cfg, {});
  s.update_footprint({4}, 30000, true);
  EXPECT_DOUBLE_EQ(s.footprint().find(4)->w_lat, 0.2 * 30000);
}

TEST(Footprint, SplitProportionalToOldLatency) {
  SchedulerConfig cfg;
  cfg.alpha = 0.5;
  auto s = make(cfg, {});
  s.update_footprint({1}, 10000, false);  // w1 = 5000
  s.update_footprint({2}, 30000, false);  // w2 = 15000
  s.update_footprint({1, 2}, 8000, false);
  EXPECT_DOUBLE_EQ(s.footprint().find(1)->w_lat, 0.5 * 5000 + 0.5 * 8000 * 0.25);
  EXPECT_DOUBLE_EQ(s.footprint().find(2)->w_lat, 0.5 * 15000 + 0.5 * 8000 * 0.75);
}

TEST(Forecast, ScaledSum) {
  SchedulerConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 1.0;
  auto s = make(cfg, {});
  s.update_footprint({1}, 3000, false);
  s.update_footprint({2}, 7000, false);
  EXPECT_DOUBLE_EQ(s.forecast_lel({1, 2}), 10000);
  EXPECT_DOUBLE_EQ(s.forecast_lel({}), 0);
  EXPECT_DOUBLE_EQ(s.forecast_lel({1, 2, 99}), 10000);

  cfg.beta = 0.7;
  auto t = make(cfg, {});
  t.update_footprint({1}, 4000, false);
  t.update_footprint({2}, 6000, false);
  EXPECT_DOUBLE_EQ(t.forecast_lel({1, 2}), 7000);
}

TEST(Footprint, CapacityBoundAndLruEviction) {
  HotspotFootprint f(3);
  for (Key k = 1; k <= 3; ++k) f.touch(k);
  f.touch(1);
  f.touch(4);
  EXPECT_EQ(f.size(), 3u);
  EXPECT_EQ(f.find(2), nullptr);
  EXPECT_NE(f.find(1), nullptr);
  EXPECT_EQ(f.evictions(), 1u);
  std::mt19937_64 gen(1);
  for (int i = 0; i < 1000; ++i) {
    f.touch(static_cast<Key>(gen() % 50));
    ASSERT_LE(f.size(), 3u);
  }
  EXPECT_THROW(HotspotFootprint(0), ConfigError);
}

TEST(Footprint, RangeIsOrdered) {
  HotspotFootprint f(10);
  for (Key k : {9, 2, 5, 7}) f.touch(k);
  const auto r = f.range(3, 8);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].key, 5);
  EXPECT_EQ(r[1].key, 7);
}

TEST(Footprint, CommitCountNeverExceedsTotal) {
  SchedulerConfig cfg;
  cfg.footprint_capacity = 4;
  auto s = make(cfg, {});
  std::mt19937_64 gen(3);
  std::vector<std::vector<Key>> active;
  for (int i = 0; i < 3000; ++i) {
    if (active.empty() || gen() % 2 == 0) {
      std::vector<Key> keys{static_cast<Key>(gen() % 8)};
      s.admit(keys);
      active.push_back(keys);
    } else {
      const std::size_t j = gen() % active.size();
      s.update_footprint(active[j], std::nullopt, gen() % 3 != 0);
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
    }
    for (Key k = 0; k < 8; ++k) {
      if (const HotspotEntry* e = s.footprint().find(k)) {
        ASSERT_LE(e->c_cnt, e->t_cnt);
        ASSERT_GE(e->a_cnt, 0);
      }
    }
  }
}

TEST(GeoScheduler, DefaultTopologyPostponesNearSite) {
  SchedulerConfig cfg;
  auto s = make(cfg, {{1, 0}, {4, 251000}});
  const auto d = s.schedule({{1, {10}}, {4, {20}}}, 0, false);
  ASSERT_EQ(d.kind, ScheduleDecision::Kind::kSchedule);
  EXPECT_EQ(d.schedule.postpone_for(1), 251000);
  EXPECT_EQ(d.schedule.postpone_for(4), 0);
}

TEST(GeoScheduler, DisabledSchedulingNeverPostpones) {
  SchedulerConfig cfg;
  cfg.scheduling = false;
  auto s = make(cfg, {{1, 0}, {4, 251000}});
  const auto d = s.schedule({{1, {10}}, {4, {20}}}, 0, false);
  EXPECT_EQ(d.schedule.postpone_for(1), 0);
  EXPECT_EQ(d.schedule.postpone_for(4), 0);
}

TEST(GeoScheduler, ColdFootprintAlwaysAdmits) {
  SchedulerConfig cfg;
  cfg.adv_opt = true;
  auto s = make(cfg, {{1, 10000}, {2, 100000}}, 0.0);
  const auto d = s.schedule({{1, {1}}, {2, {2}}}, 0, true);
  ASSERT_EQ(d.kind, ScheduleDecision::Kind::kSchedule);
  EXPECT_EQ(d.schedule.postpone_for(1), 90000);
  EXPECT_EQ(d.abort_probability, 0.0);
  EXPECT_EQ(s.footprint().find(1)->t_cnt, 0u);
  EXPECT_EQ(s.footprint().find(1)->a_cnt, 1);
}

TEST(GeoScheduler, GateDelaysThenAbortsAfterRetryLimit) {
  SchedulerConfig cfg;
  cfg.adv_opt = true;
  auto s = make(cfg, {{1, 1000}}, 0.0);
  // One aborted predecessor and two active holders: probability 1.
  s.admit({5});
  s.update_footprint({5}, std::nullopt, false);
  s.admit({5});
  s.admit({5});
  ASSERT_EQ(s.abort_probability({5}), 1.0);
  int retry = 0;
  ScheduleDecision d;
  for (;;) {
    d = s.schedule({{1, {5}}}, retry, true);
    if (d.kind != ScheduleDecision::Kind::kDelay) break;
    EXPECT_EQ(d.backoff, cfg.backoff);
    ++retry;
  }
  EXPECT_EQ(d.kind, ScheduleDecision::Kind::kAbort);
  EXPECT_EQ(retry, 10);
  EXPECT_EQ(s.footprint().find(5)->a_cnt, 2);
}

TEST(GeoScheduler, ForecastShiftsPostponement) {
  SchedulerConfig cfg;
  cfg.adv_opt = true;
  cfg.alpha = 0.0;
  cfg.beta = 1.0;
  auto s = make(cfg, {{1, 10000}, {2, 100000}});
  s.update_footprint({11}, 5000, true);
  s.update_footprint({22}, 20000, true);
  const auto d = s.schedule({{1, {11}}, {2, {22}}}, 0, false);
  EXPECT_EQ(d.schedule.postpone_for(1), 105000);
  EXPECT_EQ(d.schedule.postpone_for(2), 0);
}

TEST(GeoScheduler, RecordCompletionReportsSpans) {
  auto s = make(SchedulerConfig{}, {});
  s.admit({1, 2});
  SubtxnRecord a{1, {1}, 100, {}};
  a.timing.first_lock_at = 50;
  a.timing.last_unlock_at = 50;
  SubtxnRecord b{2, {2}, 100, {}};
  b.timing.first_lock_at = 10;
  b.timing.last_unlock_at = 70;
  SubtxnRecord c{3, {}, std::nullopt, {}};
  const auto spans = s.record_completion({a, b, c}, false);
  EXPECT_EQ(spans, (std::vector<Duration>{0, 60}));
  EXPECT_EQ(s.footprint().find(1)->c_cnt, 0u);
  EXPECT_EQ(s.footprint().find(1)->t_cnt, 1u);
  EXPECT_EQ(s.footprint().find(1)->a_cnt, 0);
}

TEST(SchedulerConfig, Validation) {
  SchedulerConfig c;
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.backoff = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace geotxn
