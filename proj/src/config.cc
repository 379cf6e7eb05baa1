#include "geotxn/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace geotxn {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(join(path, key) + ": unknown field");
  }
}

double get_number(const json& j, const std::string& path, const char* key, double def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key) + ": expected a number");
  return v.get<double>();
}

std::int64_t get_int(const json& j, const std::string& path, const char* key, std::int64_t def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v.get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "on") return true;
    if (s == "off") return false;
  }
  throw ConfigError(join(path, key) + ": expected true/false or \"on\"/\"off\"");
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v.get<std::string>();
}

Duration get_ms(const json& j, const std::string& path, const char* key, Duration def) {
  if (!j.contains(key)) return def;
  const double ms = get_number(j, path, key, 0.0);
  if (ms < 0) throw ConfigError(join(path, key) + ": must be >= 0");
  return from_millis(ms);
}

SiteId parse_site(const json& v, const LatencyProfile& topo, const std::string& path) {
  SiteId site = -1;
  if (v.is_number_integer()) {
    site = v.get<SiteId>();
  } else if (v.is_string()) {
    try {
      site = topo.site_by_name(v.get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError(path + ": unknown site '" + v.get<std::string>() + "'");
    }
  } else {
    throw ConfigError(path + ": expected a site name or index");
  }
  if (site < 0 || static_cast<std::size_t>(site) >= topo.site_count()) {
    throw ConfigError(path + ": unknown site " + std::to_string(site));
  }
  return site;
}

DelayMatrix parse_matrix(const json& j, std::size_t n, const std::string& path) {
  if (!j.is_array() || j.size() != n) {
    throw ConfigError(path + ": expected a " + std::to_string(n) + "x" + std::to_string(n) +
                      " matrix");
  }
  DelayMatrix m(n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::string row = path + "[" + std::to_string(a) + "]";
    if (!j[a].is_array() || j[a].size() != n) {
      throw ConfigError(row + ": expected " + std::to_string(n) + " entries");
    }
    for (std::size_t b = 0; b < n; ++b) {
      const json& v = j[a][b];
      const std::string cell = row + "[" + std::to_string(b) + "]";
      if (!v.is_number() || v.get<double>() < 0) {
        throw ConfigError(cell + ": expected a non-negative number of ms");
      }
      m.set(static_cast<SiteId>(a), static_cast<SiteId>(b), from_millis(v.get<double>()));
    }
  }
  return m;
}

std::vector<double> parse_rtts(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty list of ms");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number() || j[i].get<double>() < 0) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected a non-negative number");
    }
    out.push_back(j[i].get<double>());
  }
  return out;
}

LatencyProfile parse_topology_json(const json& j, const std::string& path,
                                   const std::filesystem::path& base_dir);

LatencyProfile read_topology_file(const std::filesystem::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path + ": cannot open topology file " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + file.string() + ": " + e.what());
  }
  return parse_topology_json(j, "", file.parent_path());
}

LatencyProfile parse_topology_json(const json& j, const std::string& path,
                                   const std::filesystem::path& base_dir) {
  if (j.is_string()) return read_topology_file(base_dir / j.get<std::string>(), path);
  check_keys(j, path, {"file", "dm_rtt_ms", "sites", "matrix", "jitter_pct", "schedule"});
  LatencyProfile p;
  if (j.contains("file")) {
    p = read_topology_file(base_dir / get_string(j, path, "file", ""), join(path, "file"));
  } else if (j.contains("dm_rtt_ms")) {
    p = LatencyProfile::from_coordinator_rtts(parse_rtts(j.at("dm_rtt_ms"), join(path, "dm_rtt_ms")));
  } else if (j.contains("matrix")) {
    const json& m = j.at("matrix");
    p.base = parse_matrix(m, m.is_array() ? m.size() : 0, join(path, "matrix"));
    if (j.contains("sites")) {
      const json& s = j.at("sites");
      if (!s.is_array() || s.size() != p.base.size()) {
        throw ConfigError(join(path, "sites") + ": expected one name per matrix row");
      }
      for (const auto& name : s) {
        if (!name.is_string()) throw ConfigError(join(path, "sites") + ": expected strings");
        p.site_names.push_back(name.get<std::string>());
      }
    } else {
      p.site_names.push_back("dm");
      for (std::size_t i = 1; i < p.base.size(); ++i) p.site_names.push_back("ds" + std::to_string(i));
    }
  } else {
    p = LatencyProfile::default_topology();
  }
  if (j.contains("jitter_pct")) {
    p.jitter_pct = get_number(j, path, "jitter_pct", 0.0);
    if (p.jitter_pct < 0 || p.jitter_pct >= 1) {
      throw ConfigError(join(path, "jitter_pct") + ": must be in [0, 1)");
    }
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    const std::string spath = join(path, "schedule");
    if (!s.is_array()) throw ConfigError(spath + ": expected a list");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::string epath = spath + "[" + std::to_string(i) + "]";
      check_keys(s[i], epath, {"at_s", "matrix", "dm_rtt_ms"});
      LatencyProfile::Change c;
      const double at = get_number(s[i], epath, "at_s", -1.0);
      if (at < 0) throw ConfigError(epath + ".at_s: required, >= 0");
      c.effective_at = from_millis(at * 1000.0);
      if (s[i].contains("matrix")) {
        c.delays = parse_matrix(s[i].at("matrix"), p.base.size(), epath + ".matrix");
      } else if (s[i].contains("dm_rtt_ms")) {
        c.delays =
            LatencyProfile::from_coordinator_rtts(parse_rtts(s[i].at("dm_rtt_ms"), epath + ".dm_rtt_ms"))
                .base;
        if (c.delays.size() != p.base.size()) {
          throw ConfigError(epath + ".dm_rtt_ms: site count differs from the base topology");
        }
      } else {
        throw ConfigError(epath + ": needs matrix or dm_rtt_ms");
      }
      p.schedule.push_back(std::move(c));
    }
    std::stable_sort(p.schedule.begin(), p.schedule.end(),
                     [](const auto& a, const auto& b) { return a.effective_at < b.effective_at; });
  }
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw ConfigError((path.empty() ? "topology" : path) + ": " + e.what());
  }
  return p;
}

std::vector<SiteId> parse_site_list(const json& j, const LatencyProfile& topo,
                                    const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected a list of sites");
  std::vector<SiteId> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_site(j[i], topo, path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

ExperimentConfig parse_object(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "", {"name", "seed", "topology", "workload", "features", "scheduler", "datasource",
                     "coordinator", "monitor", "faults", "warmup_fraction", "max_time_s", "trace",
                     "variants"});
  ExperimentConfig c;
  c.name = get_string(j, "", "name", c.name);
  const std::int64_t seed = get_int(j, "", "seed", 1);
  if (seed < 0) throw ConfigError("seed: must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  if (j.contains("topology")) c.topology = parse_topology_json(j.at("topology"), "topology", base_dir);

  if (j.contains("workload")) {
    const json& w = j.at("workload");
    const std::string p = "workload";
    check_keys(w, p, {"preset", "terminals", "ops_per_txn", "read_fraction", "skew_theta",
                      "dist_txn_ratio", "participants", "rounds", "keyspace", "txn_budget",
                      "duration_s", "client_abort_ratio", "centralized_sites",
                      "distributed_sites"});
    WorkloadConfig& wl = c.workload;
    if (w.contains("preset")) {
      try {
        wl.skew_theta = preset_theta(get_string(w, p, "preset", ""));
      } catch (const ConfigError& e) {
        throw ConfigError(join(p, "preset") + ": " + e.what());
      }
    }
    wl.terminals = static_cast<int>(get_int(w, p, "terminals", wl.terminals));
    wl.ops_per_txn = static_cast<int>(get_int(w, p, "ops_per_txn", wl.ops_per_txn));
    wl.read_fraction = get_number(w, p, "read_fraction", wl.read_fraction);
    wl.skew_theta = get_number(w, p, "skew_theta", wl.skew_theta);
    wl.dist_txn_ratio = get_number(w, p, "dist_txn_ratio", wl.dist_txn_ratio);
    wl.participants = static_cast<int>(get_int(w, p, "participants", wl.participants));
    wl.rounds = static_cast<int>(get_int(w, p, "rounds", wl.rounds));
    wl.keyspace = get_int(w, p, "keyspace", wl.keyspace);
    const std::int64_t budget = get_int(w, p, "txn_budget", 0);
    if (budget < 0) throw ConfigError("workload.txn_budget: must be >= 0");
    wl.txn_budget = static_cast<std::uint64_t>(budget);
    const double dur = get_number(w, p, "duration_s", 0.0);
    if (dur < 0) throw ConfigError("workload.duration_s: must be >= 0");
    wl.duration = from_millis(dur * 1000.0);
    wl.client_abort_ratio = get_number(w, p, "client_abort_ratio", wl.client_abort_ratio);
    if (w.contains("centralized_sites")) {
      wl.centralized_sites = parse_site_list(w.at("centralized_sites"), c.topology,
                                             "workload.centralized_sites");
    }
    if (w.contains("distributed_sites")) {
      wl.distributed_sites = parse_site_list(w.at("distributed_sites"), c.topology,
                                             "workload.distributed_sites");
    }
  }

  if (j.contains("features")) {
    const json& f = j.at("features");
    check_keys(f, "features", {"decentralized_prepare", "early_abort", "scheduling", "adv_opt"});
    c.decentralized_prepare = get_bool(f, "features", "decentralized_prepare", c.decentralized_prepare);
    c.early_abort = get_bool(f, "features", "early_abort", c.early_abort);
    c.scheduler.scheduling = get_bool(f, "features", "scheduling", c.scheduler.scheduling);
    c.scheduler.adv_opt = get_bool(f, "features", "adv_opt", c.scheduler.adv_opt);
  }

  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    const std::string p = "scheduler";
    check_keys(s, p, {"scheduling", "adv_opt", "alpha", "beta", "footprint_capacity",
                      "retry_limit", "backoff_ms"});
    SchedulerConfig& sc = c.scheduler;
    sc.scheduling = get_bool(s, p, "scheduling", sc.scheduling);
    sc.adv_opt = get_bool(s, p, "adv_opt", sc.adv_opt);
    sc.alpha = get_number(s, p, "alpha", sc.alpha);
    sc.beta = get_number(s, p, "beta", sc.beta);
    const std::int64_t cap = get_int(s, p, "footprint_capacity", 4096);
    if (cap < 1) throw ConfigError("scheduler.footprint_capacity: must be >= 1");
    sc.footprint_capacity = static_cast<std::size_t>(cap);
    sc.retry_limit = static_cast<int>(get_int(s, p, "retry_limit", sc.retry_limit));
    sc.backoff = get_ms(s, p, "backoff_ms", sc.backoff);
  }

  if (j.contains("datasource")) {
    const json& d = j.at("datasource");
    const std::string p = "datasource";
    check_keys(d, p, {"lock_wait_timeout_ms", "service_time_ms", "lan_delay_ms"});
    c.datasource.lock_wait_timeout = get_ms(d, p, "lock_wait_timeout_ms", c.datasource.lock_wait_timeout);
    c.datasource.service_time = get_ms(d, p, "service_time_ms", c.datasource.service_time);
    c.lan_delay = get_ms(d, p, "lan_delay_ms", c.lan_delay);
  }

  if (j.contains("coordinator")) {
    const json& d = j.at("coordinator");
    check_keys(d, "coordinator", {"log_flush_ms", "write_commit_log"});
    c.log_flush = get_ms(d, "coordinator", "log_flush_ms", c.log_flush);
    c.write_commit_log = get_bool(d, "coordinator", "write_commit_log", c.write_commit_log);
  }

  if (j.contains("monitor")) {
    const json& m = j.at("monitor");
    check_keys(m, "monitor", {"enabled", "interval_ms", "alpha_net"});
    c.monitor_enabled = get_bool(m, "monitor", "enabled", c.monitor_enabled);
    c.probe_interval = get_ms(m, "monitor", "interval_ms", c.probe_interval);
    c.alpha_net = get_number(m, "monitor", "alpha_net", c.alpha_net);
  }

  if (j.contains("faults")) {
    const json& f = j.at("faults");
    if (!f.is_array()) throw ConfigError("faults: expected a list");
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string p = "faults[" + std::to_string(i) + "]";
      check_keys(f[i], p, {"at_ms", "site", "action", "down_for_ms"});
      FaultEvent e;
      if (!f[i].contains("at_ms")) throw ConfigError(p + ".at_ms: required");
      e.at = get_ms(f[i], p, "at_ms", 0);
      if (!f[i].contains("site")) throw ConfigError(p + ".site: required");
      e.site = parse_site(f[i].at("site"), c.topology, p + ".site");
      const std::string action = get_string(f[i], p, "action", "");
      if (action == "crash") {
        e.action = FaultAction::kCrash;
      } else if (action == "restart") {
        e.action = FaultAction::kRestart;
      } else if (action == "crash_after_log") {
        e.action = FaultAction::kCrashAfterLog;
      } else {
        throw ConfigError(p + ".action: expected crash, restart or crash_after_log");
      }
      e.down_for = get_ms(f[i], p, "down_for_ms", 0);
      c.faults.push_back(e);
    }
  }

  c.warmup_fraction = get_number(j, "", "warmup_fraction", c.warmup_fraction);
  if (j.contains("max_time_s")) {
    c.max_time = from_millis(get_number(j, "", "max_time_s", 0.0) * 1000.0);
  }
  c.record_trace = get_bool(j, "", "trace", c.record_trace);
  c.validate();
  return c;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    topology.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
  if (topology.site_count() < 2) throw ConfigError("topology: needs at least one data source");
  try {
    workload.validate(data_sources());
  } catch (const ConfigError& e) {
    throw ConfigError(e.what());
  }
  scheduler.validate();
  if (datasource.lock_wait_timeout <= 0) {
    throw ConfigError("datasource.lock_wait_timeout_ms: must be > 0");
  }
  if (datasource.service_time < 0) throw ConfigError("datasource.service_time_ms: must be >= 0");
  if (!(alpha_net > 0.0 && alpha_net <= 1.0)) throw ConfigError("monitor.alpha_net: must be in (0, 1]");
  if (monitor_enabled && probe_interval <= 0) throw ConfigError("monitor.interval_ms: must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction: must be in [0, 1)");
  }
  if (max_time <= 0) throw ConfigError("max_time_s: must be > 0");
  if (workload.txn_budget == 0 && workload.duration == 0) {
    throw ConfigError("workload: set txn_budget or duration_s");
  }
  for (std::size_t i = 0; i < faults.size(); ++i) {
    const FaultEvent& f = faults[i];
    const std::string p = "faults[" + std::to_string(i) + "]";
    if (f.site < 0 || static_cast<std::size_t>(f.site) >= topology.site_count()) {
      throw ConfigError(p + ".site: unknown site");
    }
    if (f.at > max_time) throw ConfigError(p + ".at_ms: beyond max_time_s");
    if (f.action == FaultAction::kCrashAfterLog) {
      if (f.site != kCoordinatorSite) throw ConfigError(p + ".action: crash_after_log needs the coordinator");
      if (f.down_for <= 0) throw ConfigError(p + ".down_for_ms: required for crash_after_log");
    }
  }
}

LatencyProfile parse_topology(const std::string& json_text) {
  return parse_topology_json(parse_json(json_text), "", {});
}

ExperimentConfig parse_experiment(const std::string& json_text,
                                  const std::filesystem::path& base_dir) {
  return parse_object(parse_json(json_text), base_dir);
}

std::vector<ExperimentConfig> parse_sweep(const std::string& json_text,
                                          const std::filesystem::path& base_dir) {
  json base = parse_json(json_text);
  require_object(base, "");
  json variants = json::array();
  if (base.contains("variants")) {
    variants = base.at("variants");
    if (!variants.is_array()) throw ConfigError("variants: expected a list");
    base.erase("variants");
  }
  std::vector<ExperimentConfig> out;
  if (variants.empty()) {
    out.push_back(parse_object(base, base_dir));
    return out;
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string p = "variants[" + std::to_string(i) + "]";
    if (!variants[i].is_object()) throw ConfigError(p + ": expected an object");
    json merged = base;
    merged.merge_patch(variants[i]);
    if (!variants[i].contains("name")) {
      merged["name"] = get_string(base, "", "name", "default") + "-" + std::to_string(i);
    }
    try {
      out.push_back(parse_object(merged, base_dir));
    } catch (const ConfigError& e) {
      throw ConfigError(p + ": " + e.what());
    }
    if (!names.insert(out.back().name).second) {
      throw ConfigError(p + ".name: duplicate variant name '" + out.back().name + "'");
    }
  }
  return out;
}

ExperimentConfig load_experiment(const std::filesystem::path& file) {
  return parse_experiment(read_file(file), file.parent_path());
}

std::vector<ExperimentConfig> load_sweep(const std::filesystem::path& file) {
  return parse_sweep(read_file(file), file.parent_path());
}

std::vector<FaultEvent> random_fault_schedule(RngStream& rng, std::size_t data_sources,
                                              SimTime horizon, int crashes) {
  if (horizon <= 0) throw ConfigError("fault horizon must be positive");
  std::vector<SimTime> free_at(data_sources + 1, 0);
  std::vector<FaultEvent> out;
  for (int i = 0; i < crashes; ++i) {
    const auto site = static_cast<SiteId>(rng.below(data_sources + 1));
    SimTime at = static_cast<SimTime>(rng.below(static_cast<std::uint64_t>(horizon)));
    at = std::max(at, free_at[static_cast<std::size_t>(site)]);
    const Duration down = kMicrosPerMilli + static_cast<Duration>(rng.below(
                                                static_cast<std::uint64_t>(horizon / 4 + 1)));
    if (site == kCoordinatorSite && rng.next() < 0.4) {
      out.push_back(FaultEvent{at, site, FaultAction::kCrashAfterLog, down});
      // The trigger time is unknown; keep later coordinator faults clear
      // of the whole window it might occupy.
      free_at[0] = at + horizon + down + 1;
      continue;
    }
    out.push_back(FaultEvent{at, site, FaultAction::kCrash, 0});
    out.push_back(FaultEvent{at + down, site, FaultAction::kRestart, 0});
    free_at[static_cast<std::size_t>(site)] = at + down + 1;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FaultEvent& a, const FaultEvent& b) { return a.at < b.at; });
  return out;
}

}  // namespace geotxn
