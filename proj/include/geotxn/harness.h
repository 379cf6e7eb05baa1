#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "geotxn/checkers.h"
#include "geotxn/config.h"
#include "geotxn/coordinator.h"
#include "geotxn/trace.h"

namespace geotxn {

struct LatencyStats {
  std::size_t count = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p99_ms = 0;
  double p999_ms = 0;

  static LatencyStats of(std::vector<Duration> latencies);
};

struct MetricsReport {
  std::string name;
  std::uint64_t seed = 0;
  std::uint64_t submitted = 0;
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;
  std::map<AbortReason, std::uint64_t> aborts_by_reason;
  double throughput_tps = 0;
  LatencyStats latency;
  LatencyStats centralized;
  LatencyStats distributed;
  // Lower bucket bound (us, powers of two; 0 holds zero spans) -> count.
  std::map<Duration, std::uint64_t> lcs_hist;
  double mean_wan_round_trips = 0;
  SimTime end_time = 0;
  // Committed latencies, ascending.
  std::vector<Duration> latencies;

  double abort_rate() const {
    return submitted == 0 ? 0.0 : static_cast<double>(aborted) / static_cast<double>(submitted);
  }
  std::uint64_t aborts(AbortReason r) const {
    auto it = aborts_by_reason.find(r);
    return it == aborts_by_reason.end() ? 0 : it->second;
  }
};

struct RunResult {
  MetricsReport report;
  std::vector<TxnOutcome> outcomes;
  Trace trace;
  AtomicityReport atomicity;
  SerializabilityReport serializability;
  bool quiesced = false;

  bool checks_ok() const { return quiesced && atomicity.ok && serializability.ok; }
};

// Runs one experiment to quiescence (or max_time), then checks the trace.
RunResult run_experiment(const ExperimentConfig& config);

MetricsReport summarize(const std::string& name, std::uint64_t seed,
                        const std::vector<TxnOutcome>& outcomes, double warmup_fraction);

void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const MetricsReport& r);
void write_latency_cdf(std::ostream& out, const MetricsReport& r);
void write_lcs_hist(std::ostream& out, const MetricsReport& r);

// summary.csv, latency_cdf.csv, lcs_hist.csv and trace.csv under `dir`.
void emit_report(const RunResult& result, const std::filesystem::path& dir);

}  // namespace geotxn
