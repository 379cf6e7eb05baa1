#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geotxn/coordinator.h"
#include "geotxn/datasource.h"
#include "geotxn/geo_agent.h"
#include "geotxn/geo_scheduler.h"
#include "geotxn/netmodel.h"
#include "geotxn/workload.h"

namespace geotxn {

enum class FaultAction {
  kCrash,
  kRestart,
  // Crash the coordinator right after its next decision is logged,
  // before the decision is dispatched. Coordinator only.
  kCrashAfterLog,
};

struct FaultEvent {
  SimTime at = 0;
  SiteId site = 0;
  FaultAction action = FaultAction::kCrash;
  // kCrashAfterLog only: the coordinator restarts this long after the
  // triggered crash.
  Duration down_for = 0;
};

struct ExperimentConfig {
  std::string name = "default";
  std::uint64_t seed = 1;
  LatencyProfile topology = LatencyProfile::default_topology();
  WorkloadConfig workload;
  SchedulerConfig scheduler;
  bool decentralized_prepare = true;
  bool early_abort = true;
  DataSourceConfig datasource;
  Duration lan_delay = 500;
  Duration log_flush = kMicrosPerMilli;
  bool write_commit_log = true;
  bool monitor_enabled = true;
  double alpha_net = 0.875;
  Duration probe_interval = 10 * kMicrosPerMilli;
  std::vector<FaultEvent> faults;
  double warmup_fraction = 0.1;
  // Hard stop on virtual time.
  Duration max_time = 3600 * kMicrosPerSecond;
  bool record_trace = true;

  std::size_t data_sources() const { return topology.site_count() - 1; }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Parses one experiment. Relative topology file paths resolve against
// `base_dir`. Errors carry the JSON path of the offending field.
ExperimentConfig parse_experiment(const std::string& json_text,
                                  const std::filesystem::path& base_dir = {});

// The base experiment followed by one experiment per entry of the
// optional "variants" list; each variant is merged onto the base.
std::vector<ExperimentConfig> parse_sweep(const std::string& json_text,
                                          const std::filesystem::path& base_dir = {});

ExperimentConfig load_experiment(const std::filesystem::path& file);
std::vector<ExperimentConfig> load_sweep(const std::filesystem::path& file);

LatencyProfile parse_topology(const std::string& json_text);

// Random crash/restart pairs over the coordinator and data sources.
// Every crash is followed by a restart of the same site before `horizon`.
std::vector<FaultEvent> random_fault_schedule(RngStream& rng, std::size_t data_sources,
                                              SimTime horizon, int crashes);

}  // namespace geotxn
