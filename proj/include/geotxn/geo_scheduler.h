#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "geotxn/datasource.h"
#include "geotxn/footprint.h"
#include "geotxn/types.h"

namespace geotxn {

struct SchedulerConfig {
  bool scheduling = true;  // latency-aware start-time postponement
  bool adv_opt = false;    // latency forecasting + late transaction scheduling
  double alpha = 0.8;      // footprint smoothing
  double beta = 0.7;       // forecast scale-down
  std::size_t footprint_capacity = 4096;
  int retry_limit = 10;
  // Pause before a delayed transaction is re-evaluated by the gate.
  Duration backoff = kMicrosPerMilli;

  void validate() const;
};

// Postponement that aligns a participant with the slowest one:
// max_s rtt[s] - rtt[target]. Unit-agnostic.
double optimal_start_basic(const std::map<SiteId, double>& rtts, SiteId target);

// Same with forecast local execution latency folded in:
// max_s (rtt[s] + lel[s]) - (rtt[target] + lel[target]), clamped at 0.
double optimal_start_adv(const std::map<SiteId, double>& rtts,
                         const std::map<SiteId, double>& predicted_lels, SiteId target);

struct SubtxnPlan {
  SiteId site = 0;
  std::vector<Key> keys;
};

struct Schedule {
  struct Entry {
    SiteId site = 0;
    Duration postpone_by = 0;
    Duration predicted_lel = 0;
  };
  std::vector<Entry> entries;

  Duration postpone_for(SiteId site) const;
};

struct ScheduleDecision {
  enum class Kind { kSchedule, kDelay, kAbort };
  Kind kind = Kind::kSchedule;
  Schedule schedule;
  Duration backoff = 0;
  double abort_probability = 0.0;
};

// What the coordinator learned about one finished subtransaction.
struct SubtxnRecord {
  SiteId site = 0;
  std::vector<Key> keys;
  std::optional<Duration> measured_lel;
  SubtxnTiming timing;
};

/// Start-time scheduling for subtransactions plus the hotspot statistics
/// behind latency forecasting and abort-probability admission.
class GeoScheduler {
 public:
  using RttSource = std::function<Duration(SiteId)>;
  using UniformSource = std::function<double()>;

  GeoScheduler(SchedulerConfig config, RttSource rtt, UniformSource uniform);

  // Plans one round. `gate` enables abort-probability admission (only
  // meaningful with adv_opt); retry_cnt counts earlier Delay results.
  // On kSchedule the round's keys are admitted (a_cnt bumped).
  ScheduleDecision schedule(const std::vector<SubtxnPlan>& round, int retry_cnt, bool gate);

  // w_r = w_lat_r / sum_k w_lat_k over the subtransaction's keys (uniform
  // when that sum is 0), then w_lat_r <- alpha*w_lat_r + (1-alpha)*lel*w_r.
  // Counters: t_cnt bumped, c_cnt bumped iff committed, a_cnt decremented.
  void update_footprint(const std::vector<Key>& keys, std::optional<Duration> measured_lel,
                        bool committed);

  // beta * sum of w_lat over the keys; unknown keys contribute 0.
  double forecast_lel(const std::vector<Key>& keys) const;

  // 1 - prod_k (c_cnt/t_cnt)^max(a_cnt - 1, 0); unknown keys and t_cnt == 0
  // contribute a factor of 1.
  double abort_probability(const std::vector<Key>& keys) const;

  // Folds a finished transaction into the footprint; returns the lock
  // contention span of every subtransaction that took a lock.
  std::vector<Duration> record_completion(const std::vector<SubtxnRecord>& subtxns,
                                          bool committed);

  void admit(const std::vector<Key>& keys);
  void reset() { footprint_.clear(); }

  const HotspotFootprint& footprint() const { return footprint_; }
  const SchedulerConfig& config() const { return config_; }

 private:
  SchedulerConfig config_;
  RttSource rtt_;
  UniformSource uniform_;
  HotspotFootprint footprint_;
};

}  // namespace geotxn
