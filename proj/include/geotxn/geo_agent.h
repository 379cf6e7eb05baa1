#pragma once

#include <map>
#include <vector>

#include "geotxn/datasource.h"
#include "geotxn/messages.h"
#include "geotxn/netmodel.h"
#include "geotxn/trace.h"

namespace geotxn {

struct AgentConfig {
  bool decentralized_prepare = true;
  bool early_abort = true;
  // One-way delay between the agent and its co-located data source.
  Duration lan_delay = 500;
};

/// Site actor co-located with one data source. Statements from the
/// coordinator run against the local source; after the statement marked
/// last, the agent ends and prepares the subtransaction itself (one LAN
/// round trip) and reports the vote. On a local failure before commit it
/// notifies peer agents directly so they roll back without waiting for
/// the coordinator.
class GeoAgent : public Endpoint {
 public:
  GeoAgent(SimKernel& kernel, Network& network, DataSource& source, AgentConfig config,
           Trace* trace = nullptr);

  void deliver(const Message& msg) override;

  void on_statement(const Message& msg);
  void async_prepare(TxnId xid);
  void async_rollback(TxnId xid, AbortReason reason);
  void handle_peer_rollback(const Message& msg);

  // The agent fails together with its data source.
  void crash();
  // Restarts the source and announces the reconnect to the coordinator.
  void restart();
  void on_coordinator_disconnect();

  SiteId site() const { return source_.site(); }
  DataSource& source() { return source_; }
  const AgentConfig& config() const { return config_; }

 private:
  struct Context {
    std::vector<SiteId> peers;
    std::uint32_t round = 0;
    std::vector<Op> ops;
    std::size_t next_op = 0;
    bool is_last = false;
    SimTime statement_started = 0;
    Duration lel = 0;
  };

  void run_next_op(TxnId xid);
  void on_execution_failure(TxnId xid, AbortReason reason);
  void reply(MsgKind kind, TxnId xid, AbortReason reason = AbortReason::kNone,
             bool peers_notified = false);
  Message make(MsgKind kind, SiteId dst, TxnId xid) const;
  // Runs `action` after `hops` LAN hops unless the site crashes meanwhile.
  void after_lan(int hops, std::function<void()> action, const char* label);
  std::vector<SiteId> peers_of(TxnId xid) const;

  SimKernel& kernel_;
  Network& network_;
  DataSource& source_;
  AgentConfig config_;
  Trace* trace_;
  std::uint64_t epoch_ = 0;
  std::map<TxnId, Context> contexts_;
};

}  // namespace geotxn
