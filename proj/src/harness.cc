#include "geotxn/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "geotxn/geo_agent.h"
#include "geotxn/workload.h"

namespace geotxn {

LatencyStats LatencyStats::of(std::vector<Duration> latencies) {
  LatencyStats s;
  s.count = latencies.size();
  if (latencies.empty()) return s;
  std::sort(latencies.begin(), latencies.end());
  double sum = 0;
  for (Duration d : latencies) sum += static_cast<double>(d);
  s.mean_ms = sum / static_cast<double>(latencies.size()) / 1000.0;
  auto rank = [&](double q) {
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(latencies.size())));
    idx = std::clamp<std::size_t>(idx, 1, latencies.size()) - 1;
    return to_millis(latencies[idx]);
  };
  s.p50_ms = rank(0.5);
  s.p99_ms = rank(0.99);
  s.p999_ms = rank(0.999);
  return s;
}

MetricsReport summarize(const std::string& name, std::uint64_t seed,
                        const std::vector<TxnOutcome>& outcomes, double warmup_fraction) {
  MetricsReport r;
  r.name = name;
  r.seed = seed;
  r.submitted = outcomes.size();
  std::vector<Duration> all, central, dist;
  SimTime end = 0;
  std::uint64_t wan = 0, wan_n = 0;
  for (const auto& o : outcomes) {
    end = std::max(end, o.completion_time);
    for (Duration lcs : o.lock_contention_spans) {
      Duration bucket = 0;
      if (lcs > 0) {
        bucket = 1;
        while (bucket * 2 <= lcs) bucket *= 2;
      }
      ++r.lcs_hist[bucket];
    }
    if (!o.committed) {
      ++r.aborted;
      ++r.aborts_by_reason[o.reason];
      continue;
    }
    ++r.committed;
    all.push_back(o.latency());
    (o.distributed ? dist : central).push_back(o.latency());
    if (o.distributed) {
      wan += static_cast<std::uint64_t>(o.wan_round_trips);
      ++wan_n;
    }
  }
  r.end_time = end;
  const auto warm = static_cast<SimTime>(warmup_fraction * static_cast<double>(end));
  std::uint64_t counted = 0;
  for (const auto& o : outcomes) {
    if (o.committed && o.completion_time >= warm) ++counted;
  }
  if (end > warm) {
    r.throughput_tps = static_cast<double>(counted) / (static_cast<double>(end - warm) / 1e6);
  }
  r.latency = LatencyStats::of(all);
  r.centralized = LatencyStats::of(central);
  r.distributed = LatencyStats::of(dist);
  r.mean_wan_round_trips = wan_n == 0 ? 0.0 : static_cast<double>(wan) / static_cast<double>(wan_n);
  std::sort(all.begin(), all.end());
  r.latencies = std::move(all);
  return r;
}

namespace {

std::string fmt(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

struct InFlight {
  int terminal = 0;
  Transaction txn;
};

struct Orphan {
  InFlight info;
  SimTime resolved_at = 0;
  bool awaiting_restart = true;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult res;
  Trace& trace = res.trace;
  trace.set_enabled(cfg.record_trace);

  SimKernel kernel(cfg.seed);
  Network net(kernel, cfg.topology);
  const std::size_t n = cfg.data_sources();
  std::vector<std::unique_ptr<DataSource>> sources;
  std::vector<std::unique_ptr<GeoAgent>> agents;
  const AgentConfig agent_cfg{cfg.decentralized_prepare, cfg.early_abort, cfg.lan_delay};
  for (std::size_t s = 1; s <= n; ++s) {
    sources.push_back(
        std::make_unique<DataSource>(kernel, static_cast<SiteId>(s), cfg.datasource, &trace));
    agents.push_back(std::make_unique<GeoAgent>(kernel, net, *sources.back(), agent_cfg, &trace));
  }
  auto agent = [&](SiteId s) -> GeoAgent& { return *agents.at(static_cast<std::size_t>(s - 1)); };

  std::unique_ptr<RttMonitor> monitor;
  if (cfg.monitor_enabled) {
    monitor = std::make_unique<RttMonitor>(kernel, net, kCoordinatorSite, cfg.alpha_net,
                                           cfg.probe_interval);
  }
  const CoordinatorConfig dm_cfg{cfg.decentralized_prepare, cfg.early_abort, cfg.log_flush,
                                 cfg.datasource.lock_wait_timeout, cfg.write_commit_log};
  Coordinator dm(kernel, net, dm_cfg, cfg.scheduler, monitor.get(), &trace);
  WorkloadGenerator workload(cfg.workload, n, kernel);
  if (monitor) monitor->start();

  const WorkloadConfig& wl = cfg.workload;
  std::uint64_t issued = 0;
  TxnId next_tid = 1;
  std::map<TxnId, InFlight> in_flight;
  std::vector<Orphan> orphans;
  std::vector<int> waiting;  // terminals parked while the coordinator is down
  std::vector<TxnOutcome>& outcomes = res.outcomes;

  auto can_issue = [&]() {
    return (wl.txn_budget == 0 || issued < wl.txn_budget) &&
           (wl.duration == 0 || kernel.now() < wl.duration);
  };

  std::function<void(int)> issue = [&](int terminal) {
    if (!can_issue()) return;
    if (!dm.is_up()) {
      waiting.push_back(terminal);
      return;
    }
    Transaction txn = workload.next_transaction(terminal);
    txn.tid = next_tid++;
    txn.submit_time = kernel.now();
    ++issued;
    in_flight[txn.tid] = InFlight{terminal, txn};
    dm.submit(std::move(txn), [&, terminal](const TxnOutcome& o) {
      outcomes.push_back(o);
      in_flight.erase(o.tid);
      kernel.schedule_after(0, [&, terminal]() { issue(terminal); }, "terminal_next");
    });
  };

  int faults_pending = static_cast<int>(cfg.faults.size());
  int auto_restarts = 0;
  bool crash_armed = false;
  Duration armed_down_for = 0;

  auto crash_dm = [&]() {
    if (!dm.is_up()) return;
    for (TxnId tid : dm.crash()) {
      auto it = in_flight.find(tid);
      if (it == in_flight.end()) continue;
      waiting.push_back(it->second.terminal);
      orphans.push_back(Orphan{std::move(it->second), kernel.now(), true});
      in_flight.erase(it);
    }
    for (std::size_t s = 1; s <= n; ++s) {
      const auto site = static_cast<SiteId>(s);
      kernel.schedule_after(
          net.profile().one_way(kCoordinatorSite, site, kernel.now()),
          [&, site]() { agent(site).on_coordinator_disconnect(); }, "dm_disconnect", site);
    }
  };
  auto restart_dm = [&]() {
    if (dm.is_up()) return;
    dm.restart();
    for (auto& o : orphans) {
      if (!o.awaiting_restart) continue;
      o.awaiting_restart = false;
      o.resolved_at = kernel.now();
    }
    std::vector<int> parked;
    parked.swap(waiting);
    std::sort(parked.begin(), parked.end());
    for (int t : parked) {
      kernel.schedule_after(0, [&, t]() { issue(t); }, "terminal_resume");
    }
  };

  dm.set_log_hook([&](TxnId) {
    if (!crash_armed) return false;
    crash_armed = false;
    ++auto_restarts;
    kernel.schedule_after(0, crash_dm, "fault_crash_after_log");
    kernel.schedule_after(
        armed_down_for,
        [&]() {
          restart_dm();
          --auto_restarts;
        },
        "fault_restart");
    return true;
  });

  for (const FaultEvent& f : cfg.faults) {
    kernel.schedule(
        f.at,
        [&, f]() {
          --faults_pending;
          if (f.site == kCoordinatorSite) {
            switch (f.action) {
              case FaultAction::kCrash:
                crash_dm();
                break;
              case FaultAction::kRestart:
                restart_dm();
                break;
              case FaultAction::kCrashAfterLog:
                crash_armed = true;
                armed_down_for = f.down_for;
                break;
            }
            return;
          }
          GeoAgent& a = agent(f.site);
          if (f.action == FaultAction::kCrash && a.source().is_up()) {
            a.crash();
          } else if (f.action == FaultAction::kRestart && !a.source().is_up()) {
            a.restart();
          }
        },
        "fault", f.site);
  }

  for (int t = 0; t < wl.terminals; ++t) {
    kernel.schedule(0, [&, t]() { issue(t); }, "terminal_start");
  }

  auto quiescent = [&]() {
    if (can_issue() || !in_flight.empty() || !waiting.empty()) return false;
    if (faults_pending > 0 || auto_restarts > 0) return false;
    if (!dm.is_up() || !dm.idle()) return false;
    for (const auto& s : sources) {
      if (!s->is_up()) return false;
    }
    return true;
  };
  kernel.run_while_not(quiescent, cfg.max_time);
  res.quiesced = quiescent();
  if (monitor) monitor->stop();
  kernel.run_until(cfg.max_time);

  for (const auto& o : orphans) {
    TxnOutcome out;
    out.tid = o.info.txn.tid;
    out.submit_time = o.info.txn.submit_time;
    out.completion_time = o.resolved_at;
    out.distributed = o.info.txn.distributed();
    bool committed = false;
    if (const CommitLogRecord* rec = dm.log().find(out.tid)) committed = rec->commit;
    for (SiteId s : o.info.txn.participants()) {
      const auto st = agent(s).source().state(out.tid);
      committed = committed || (st && *st == XaState::kCommitted);
    }
    out.committed = committed;
    out.reason = committed ? AbortReason::kNone : AbortReason::kCoordinatorFailure;
    outcomes.push_back(out);
  }

  res.report = summarize(cfg.name, cfg.seed, outcomes, cfg.warmup_fraction);
  res.report.submitted = issued;
  if (cfg.record_trace) {
    res.atomicity = check_atomicity(trace.events());
    res.serializability = check_serializability(trace.events());
  }
  return res;
}

void write_summary_header(std::ostream& out) {
  out << "name,seed,submitted,committed,aborted,aborted_admission,aborted_lock_timeout,"
         "aborted_failure,aborted_client,abort_rate,throughput_tps,latency_mean_ms,"
         "latency_p50_ms,latency_p99_ms,latency_p999_ms,centralized_count,centralized_mean_ms,"
         "centralized_p99_ms,distributed_count,distributed_mean_ms,distributed_p99_ms,"
         "mean_wan_round_trips,virtual_time_s\n";
}

void write_summary_row(std::ostream& out, const MetricsReport& r) {
  const std::uint64_t failures = r.aborts(AbortReason::kPeerFailure) +
                                 r.aborts(AbortReason::kSiteFailure) +
                                 r.aborts(AbortReason::kCoordinatorFailure);
  out << r.name << ',' << r.seed << ',' << r.submitted << ',' << r.committed << ',' << r.aborted
      << ',' << r.aborts(AbortReason::kAdmission) << ',' << r.aborts(AbortReason::kLockTimeout)
      << ',' << failures << ',' << r.aborts(AbortReason::kClient) << ',' << fmt(r.abort_rate(), 6)
      << ',' << fmt(r.throughput_tps) << ',' << fmt(r.latency.mean_ms) << ','
      << fmt(r.latency.p50_ms) << ',' << fmt(r.latency.p99_ms) << ',' << fmt(r.latency.p999_ms)
      << ',' << r.centralized.count << ',' << fmt(r.centralized.mean_ms) << ','
      << fmt(r.centralized.p99_ms) << ',' << r.distributed.count << ','
      << fmt(r.distributed.mean_ms) << ',' << fmt(r.distributed.p99_ms) << ','
      << fmt(r.mean_wan_round_trips) << ',' << fmt(static_cast<double>(r.end_time) / 1e6, 6)
      << '\n';
}

void write_latency_cdf(std::ostream& out, const MetricsReport& r) {
  out << "latency_us,cumulative_fraction\n";
  const auto& v = r.latencies;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
    out << v[i] << ',' << fmt(static_cast<double>(i + 1) / static_cast<double>(v.size()), 6)
        << '\n';
  }
}

void write_lcs_hist(std::ostream& out, const MetricsReport& r) {
  out << "lcs_lo_us,lcs_hi_us,count\n";
  for (const auto& [lo, count] : r.lcs_hist) {
    out << lo << ',' << (lo == 0 ? 1 : lo * 2) << ',' << count << '\n';
  }
}

void emit_report(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("summary.csv");
    write_summary_header(f);
    write_summary_row(f, result.report);
  }
  {
    auto f = open("latency_cdf.csv");
    write_latency_cdf(f, result.report);
  }
  {
    auto f = open("lcs_hist.csv");
    write_lcs_hist(f, result.report);
  }
  {
    auto f = open("trace.csv");
    result.trace.write_csv(f);
  }
}

}  // namespace geotxn
