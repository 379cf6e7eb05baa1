#include "geotxn/geo_scheduler.h"

#include <algorithm>
#include <cmath>

namespace geotxn {

void SchedulerConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("scheduler.alpha must be in [0, 1]");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("scheduler.beta must be in (0, 1]");
  if (footprint_capacity == 0) throw ConfigError("scheduler.footprint_capacity must be positive");
  if (retry_limit < 0) throw ConfigError("scheduler.retry_limit must be >= 0");
  if (backoff <= 0) throw ConfigError("scheduler.backoff_ms must be positive");
}

double optimal_start_basic(const std::map<SiteId, double>& rtts, SiteId target) {
  auto it = rtts.find(target);
  if (it == rtts.end()) throw std::invalid_argument("target is not a participant");
  double slowest = it->second;
  for (const auto& [site, rtt] : rtts) {
    if (rtt < 0) throw std::invalid_argument("negative rtt");
    slowest = std::max(slowest, rtt);
  }
  return slowest - it->second;
}

double optimal_start_adv(const std::map<SiteId, double>& rtts,
                         const std::map<SiteId, double>& predicted_lels, SiteId target) {
  if (rtts.size() != predicted_lels.size()) {
    throw std::invalid_argument("rtt and latency maps cover different participants");
  }
  auto self = rtts.find(target);
  if (self == rtts.end()) throw std::invalid_argument("target is not a participant");
  double slowest = 0.0;
  bool first = true;
  for (const auto& [site, rtt] : rtts) {
    auto lel = predicted_lels.find(site);
    if (lel == predicted_lels.end()) {
      throw std::invalid_argument("rtt and latency maps cover different participants");
    }
    const double span = rtt + lel->second;
    slowest = first ? span : std::max(slowest, span);
    first = false;
  }
  const double mine = self->second + predicted_lels.at(target);
  return std::max(0.0, slowest - mine);
}

Duration Schedule::postpone_for(SiteId site) const {
  for (const auto& e : entries) {
    if (e.site == site) return e.postpone_by;
  }
  return 0;
}

GeoScheduler::GeoScheduler(SchedulerConfig config, RttSource rtt, UniformSource uniform)
    : config_(config),
      rtt_(std::move(rtt)),
      uniform_(std::move(uniform)),
      footprint_(config.footprint_capacity) {
  config_.validate();
}

void GeoScheduler::admit(const std::vector<Key>& keys) {
  for (Key k : keys) {
    ++footprint_.touch(k).a_cnt;
  }
}

ScheduleDecision GeoScheduler::schedule(const std::vector<SubtxnPlan>& round, int retry_cnt,
                                        bool gate) {
  ScheduleDecision out;
  std::map<SiteId, double> rtts;
  std::map<SiteId, double> lels;
  std::vector<Key> all_keys;
  for (const auto& sub : round) {
    rtts[sub.site] = static_cast<double>(rtt_(sub.site));
    lels[sub.site] = 0.0;
    all_keys.insert(all_keys.end(), sub.keys.begin(), sub.keys.end());
  }

  if (config_.adv_opt) {
    for (const auto& sub : round) lels[sub.site] = forecast_lel(sub.keys);
    out.backoff = config_.backoff;
    if (gate) {
      out.abort_probability = abort_probability(all_keys);
      // Block when the predicted abort probability wins the draw.
      if (out.abort_probability > uniform_()) {
        out.kind = retry_cnt < config_.retry_limit ? ScheduleDecision::Kind::kDelay
                                                   : ScheduleDecision::Kind::kAbort;
        return out;
      }
    }
  }

  for (const auto& sub : round) {
    Schedule::Entry e;
    e.site = sub.site;
    e.predicted_lel = static_cast<Duration>(std::llround(lels[sub.site]));
    if (config_.scheduling) {
      e.postpone_by =
          static_cast<Duration>(std::llround(optimal_start_adv(rtts, lels, sub.site)));
    }
    out.schedule.entries.push_back(e);
  }
  admit(all_keys);
  return out;
}

void GeoScheduler::update_footprint(const std::vector<Key>& keys,
                                    std::optional<Duration> measured_lel, bool committed) {
  if (keys.empty()) return;
  double sum = 0.0;
  std::vector<double> old(keys.size(), 0.0);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (const HotspotEntry* e = footprint_.find(keys[i])) old[i] = e->w_lat;
    sum += old[i];
  }
  const double alpha = config_.alpha;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    HotspotEntry& e = footprint_.touch(keys[i]);
    if (measured_lel) {
      const double w = sum > 0.0 ? old[i] / sum : 1.0 / static_cast<double>(keys.size());
      e.w_lat = alpha * e.w_lat + (1.0 - alpha) * static_cast<double>(*measured_lel) * w;
    }
    ++e.t_cnt;
    if (committed) ++e.c_cnt;
    if (e.a_cnt > 0) --e.a_cnt;
  }
}

double GeoScheduler::forecast_lel(const std::vector<Key>& keys) const {
  double sum = 0.0;
  for (Key k : keys) {
    if (const HotspotEntry* e = footprint_.find(k)) sum += e->w_lat;
  }
  return config_.beta * sum;
}

double GeoScheduler::abort_probability(const std::vector<Key>& keys) const {
  double success = 1.0;
  for (Key k : keys) {
    const HotspotEntry* e = footprint_.find(k);
    if (e == nullptr || e->t_cnt == 0) continue;
    const std::int64_t waiters = std::max<std::int64_t>(e->a_cnt - 1, 0);
    if (waiters == 0) continue;
    const double ratio = static_cast<double>(e->c_cnt) / static_cast<double>(e->t_cnt);
    success *= std::pow(ratio, static_cast<double>(waiters));
  }
  return 1.0 - success;
}

std::vector<Duration> GeoScheduler::record_completion(const std::vector<SubtxnRecord>& subtxns,
                                                      bool committed) {
  std::vector<Duration> spans;
  for (const auto& sub : subtxns) {
    update_footprint(sub.keys, sub.measured_lel, committed);
    if (auto lcs = sub.timing.lock_contention_span()) spans.push_back(*lcs);
  }
  return spans;
}

}  // namespace geotxn
