#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "geotxn/coordinator.h"
#include "geotxn/datasource.h"
#include "geotxn/geo_agent.h"
#include "geotxn/netmodel.h"
#include "geotxn/sim_kernel.h"
#include "geotxn/trace.h"

namespace geotxn::testing {

struct ClusterOptions {
  std::vector<double> rtt_ms{10, 100};
  bool decentralized_prepare = false;
  bool early_abort = false;
  bool scheduling = false;
  bool adv_opt = false;
  Duration service_time = 0;
  Duration lan_delay = 500;
  Duration log_flush = kMicrosPerMilli;
  Duration lock_wait_timeout = 5 * kMicrosPerSecond;
  bool write_commit_log = true;
  std::uint64_t seed = 1;
};

// Coordinator, agents and data sources wired over a zero-jitter network.
struct Cluster {
  explicit Cluster(const ClusterOptions& o = {})
      : kernel(o.seed), net(kernel, LatencyProfile::from_coordinator_rtts(o.rtt_ms)) {
    DataSourceConfig ds_cfg;
    ds_cfg.service_time = o.service_time;
    ds_cfg.lock_wait_timeout = o.lock_wait_timeout;
    const AgentConfig agent_cfg{o.decentralized_prepare, o.early_abort, o.lan_delay};
    for (std::size_t s = 1; s <= o.rtt_ms.size(); ++s) {
      sources.push_back(
          std::make_unique<DataSource>(kernel, static_cast<SiteId>(s), ds_cfg, &trace));
      agents.push_back(std::make_unique<GeoAgent>(kernel, net, *sources.back(), agent_cfg, &trace));
    }
    CoordinatorConfig dm_cfg;
    dm_cfg.decentralized_prepare = o.decentralized_prepare;
    dm_cfg.early_abort = o.early_abort;
    dm_cfg.log_flush = o.log_flush;
    dm_cfg.lock_wait_timeout = o.lock_wait_timeout;
    dm_cfg.write_commit_log = o.write_commit_log;
    SchedulerConfig sc;
    sc.scheduling = o.scheduling;
    sc.adv_opt = o.adv_opt;
    dm = std::make_unique<Coordinator>(kernel, net, dm_cfg, sc, nullptr, &trace);
  }

  DataSource& source(SiteId s) { return *sources.at(static_cast<std::size_t>(s - 1)); }
  GeoAgent& agent(SiteId s) { return *agents.at(static_cast<std::size_t>(s - 1)); }

  // Submits at the current time and records the outcome.
  void submit(Transaction txn) {
    dm->submit(std::move(txn), [this](const TxnOutcome& o) { outcomes[o.tid] = o; });
  }
  void submit_at(SimTime at, Transaction txn) {
    kernel.schedule(at, [this, t = std::move(txn)]() mutable { submit(std::move(t)); });
  }
  std::optional<TxnOutcome> outcome(TxnId tid) const {
    auto it = outcomes.find(tid);
    if (it == outcomes.end()) return std::nullopt;
    return it->second;
  }

  SimKernel kernel;
  Trace trace;
  Network net;
  std::vector<std::unique_ptr<DataSource>> sources;
  std::vector<std::unique_ptr<GeoAgent>> agents;
  std::unique_ptr<Coordinator> dm;
  std::map<TxnId, TxnOutcome> outcomes;
};

inline Op rd(Key k) { return Op{k, false}; }
inline Op wr(Key k) { return Op{k, true}; }

// One round, one last statement per site.
inline Transaction one_round(TxnId tid, const std::vector<std::pair<SiteId, std::vector<Op>>>& parts) {
  Transaction t;
  t.tid = tid;
  std::vector<Statement> round;
  for (const auto& [site, ops] : parts) round.push_back(Statement{site, ops, true});
  t.rounds.push_back(std::move(round));
  return t;
}

inline std::optional<SimTime> first_event(const Trace& trace, TxnId tid, SiteId site,
                                          const std::string& event) {
  for (const auto& e : trace.events()) {
    if (e.tid == tid && e.site == site && e.event == event) return e.time;
  }
  return std::nullopt;
}

}  // namespace geotxn::testing
