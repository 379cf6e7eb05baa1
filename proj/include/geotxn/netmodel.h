#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geotxn/messages.h"
#include "geotxn/sim_kernel.h"
#include "geotxn/types.h"

namespace geotxn {

// Row-major square matrix of one-way delays in microseconds.
class DelayMatrix {
 public:
  DelayMatrix() = default;
  explicit DelayMatrix(std::size_t n) : n_(n), d_(n * n, 0) {}

  std::size_t size() const { return n_; }
  Duration at(SiteId src, SiteId dst) const { return d_[index(src, dst)]; }
  void set(SiteId src, SiteId dst, Duration v);

 private:
  std::size_t index(SiteId src, SiteId dst) const;

  std::size_t n_ = 0;
  std::vector<Duration> d_;
};

/// One-way delay model between every pair of sites, with optional
/// time-varying overrides. RTT(a, b) = one_way(a, b) + one_way(b, a).
struct LatencyProfile {
  struct Change {
    SimTime effective_at = 0;
    DelayMatrix delays;
  };

  std::vector<std::string> site_names;
  DelayMatrix base;
  double jitter_pct = 0.0;
  std::vector<Change> schedule;  // sorted by effective_at

  std::size_t site_count() const { return base.size(); }
  const DelayMatrix& matrix_at(SimTime t) const;
  Duration one_way(SiteId src, SiteId dst, SimTime t) const {
    return matrix_at(t).at(src, dst);
  }
  Duration rtt(SiteId a, SiteId b, SimTime t) const {
    return one_way(a, b, t) + one_way(b, a, t);
  }
  SiteId site_by_name(const std::string& name) const;
  void validate() const;

  // Coordinator plus one data source per entry; the coordinator<->source
  // one-way delay is rtt/2 and source<->source delay is the larger of the
  // two coordinator legs.
  static LatencyProfile from_coordinator_rtts(const std::vector<double>& rtt_ms);
  // Four data nodes at 0, 27, 73 and 251 ms RTT from the middleware.
  static LatencyProfile default_topology();
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void deliver(const Message& msg) = 0;
};

/// Delivers messages between sites after the modelled one-way delay.
/// A message is dropped when its destination is down at delivery time or
/// its sender crashed after sending.
class Network {
 public:
  Network(SimKernel& kernel, LatencyProfile profile);

  void attach(SiteId site, Endpoint* endpoint);
  void send(Message msg);
  // Delay a message sent now would incur, jitter included.
  Duration sample_delay(SiteId src, SiteId dst);

  void set_up(SiteId site, bool up);
  bool is_up(SiteId site) const { return up_.at(check(site)); }
  std::uint64_t epoch(SiteId site) const { return epoch_.at(check(site)); }

  const LatencyProfile& profile() const { return profile_; }
  SimKernel& kernel() { return kernel_; }
  std::uint64_t messages_sent() const { return sent_; }
  std::uint64_t messages_dropped() const { return dropped_; }

 private:
  std::size_t check(SiteId site) const;

  SimKernel& kernel_;
  LatencyProfile profile_;
  std::vector<Endpoint*> endpoints_;
  std::vector<bool> up_;
  std::vector<std::uint64_t> epoch_;
  std::uint64_t sent_ = 0;
  std::uint64_t dropped_ = 0;
};

struct RttEstimate {
  SiteId dst = 0;
  Duration ewma_rtt = 0;
  double alpha_net = 0.875;
  SimTime last_sample_at = 0;
  std::uint64_t samples = 0;
};

/// Periodic round-trip probes from the coordinator to every data source,
/// smoothed with an exponentially weighted moving average. Probes overlap:
/// a new one is issued every interval regardless of outstanding replies.
class RttMonitor {
 public:
  RttMonitor(SimKernel& kernel, Network& network, SiteId owner, double alpha_net,
             Duration interval);

  void start();
  void stop();
  // Stops probing and forgets every estimate.
  void reset();
  bool running() const { return running_; }

  void probe_tick(SiteId dst);
  void on_probe_reply(const Message& reply);

  // Falls back to the configured base RTT until the first sample arrives.
  Duration estimated_rtt(SiteId dst) const;
  std::optional<RttEstimate> estimate(SiteId dst) const;

 private:
  SimKernel& kernel_;
  Network& network_;
  SiteId owner_;
  double alpha_net_;
  Duration interval_;
  bool running_ = false;
  std::uint64_t generation_ = 0;
  std::map<SiteId, RttEstimate> estimates_;
};

}  // namespace geotxn
