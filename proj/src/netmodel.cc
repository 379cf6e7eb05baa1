#include "geotxn/netmodel.h"

#include <algorithm>
#include <cmath>

namespace geotxn {

std::size_t DelayMatrix::index(SiteId src, SiteId dst) const {
  if (src < 0 || dst < 0 || static_cast<std::size_t>(src) >= n_ ||
      static_cast<std::size_t>(dst) >= n_) {
    throw ConfigError("unknown site in delay lookup: " + std::to_string(src) + " -> " +
                      std::to_string(dst));
  }
  return static_cast<std::size_t>(src) * n_ + static_cast<std::size_t>(dst);
}

void DelayMatrix::set(SiteId src, SiteId dst, Duration v) {
  if (v < 0) throw ConfigError("negative delay");
  d_[index(src, dst)] = v;
}

const DelayMatrix& LatencyProfile::matrix_at(SimTime t) const {
  const DelayMatrix* current = &base;
  for (const auto& change : schedule) {
    if (change.effective_at > t) break;
    current = &change.delays;
  }
  return *current;
}

SiteId LatencyProfile::site_by_name(const std::string& name) const {
  for (std::size_t i = 0; i < site_names.size(); ++i) {
    if (site_names[i] == name) return static_cast<SiteId>(i);
  }
  throw ConfigError("unknown site '" + name + "'");
}

void LatencyProfile::validate() const {
  if (base.size() < 2) throw ConfigError("topology needs a coordinator and at least one data source");
  if (site_names.size() != base.size()) throw ConfigError("site names do not match matrix size");
  if (jitter_pct < 0.0 || jitter_pct >= 1.0) throw ConfigError("jitter_pct must be in [0, 1)");
  SimTime last = -1;
  for (const auto& change : schedule) {
    if (change.delays.size() != base.size()) {
      throw ConfigError("schedule matrix size does not match base matrix");
    }
    if (change.effective_at < last) throw ConfigError("schedule entries must be sorted by time");
    last = change.effective_at;
  }
}

LatencyProfile LatencyProfile::from_coordinator_rtts(const std::vector<double>& rtt_ms) {
  LatencyProfile p;
  const std::size_t n = rtt_ms.size() + 1;
  p.base = DelayMatrix(n);
  p.site_names.push_back("dm");
  std::vector<Duration> leg(n, 0);
  for (std::size_t i = 0; i < rtt_ms.size(); ++i) {
    if (rtt_ms[i] < 0) throw ConfigError("negative rtt");
    p.site_names.push_back("ds" + std::to_string(i + 1));
    leg[i + 1] = from_millis(rtt_ms[i] / 2.0);
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      p.base.set(static_cast<SiteId>(a), static_cast<SiteId>(b), std::max(leg[a], leg[b]));
    }
  }
  return p;
}

LatencyProfile LatencyProfile::default_topology() {
  return from_coordinator_rtts({0.0, 27.0, 73.0, 251.0});
}

Network::Network(SimKernel& kernel, LatencyProfile profile)
    : kernel_(kernel), profile_(std::move(profile)) {
  profile_.validate();
  const std::size_t n = profile_.site_count();
  endpoints_.assign(n, nullptr);
  up_.assign(n, true);
  epoch_.assign(n, 0);
}

std::size_t Network::check(SiteId site) const {
  if (site < 0 || static_cast<std::size_t>(site) >= endpoints_.size()) {
    throw ConfigError("unknown site " + std::to_string(site));
  }
  return static_cast<std::size_t>(site);
}

void Network::attach(SiteId site, Endpoint* endpoint) { endpoints_[check(site)] = endpoint; }

Duration Network::sample_delay(SiteId src, SiteId dst) {
  const Duration base = profile_.one_way(src, dst, kernel_.now());
  if (profile_.jitter_pct <= 0.0 || base == 0) return base;
  const double u = kernel_.rng_next("net.jitter");
  const double factor = 1.0 + profile_.jitter_pct * (2.0 * u - 1.0);
  return std::max<Duration>(0, std::llround(static_cast<double>(base) * factor));
}

void Network::send(Message msg) {
  const std::size_t src = check(msg.src);
  const std::size_t dst = check(msg.dst);
  if (!up_[src]) {
    ++dropped_;
    return;
  }
  ++sent_;
  const Duration delay = sample_delay(msg.src, msg.dst);
  const std::uint64_t src_epoch = epoch_[src];
  const SiteId target = msg.dst;
  const char* label = to_string(msg.kind);
  kernel_.schedule_after(
      delay,
      [this, src, dst, src_epoch, m = std::move(msg)]() {
        if (!up_[dst] || epoch_[src] != src_epoch || endpoints_[dst] == nullptr) {
          ++dropped_;
          return;
        }
        endpoints_[dst]->deliver(m);
      },
      label, target);
}

void Network::set_up(SiteId site, bool up) {
  const std::size_t i = check(site);
  if (up_[i] && !up) ++epoch_[i];
  up_[i] = up;
}

RttMonitor::RttMonitor(SimKernel& kernel, Network& network, SiteId owner, double alpha_net,
                       Duration interval)
    : kernel_(kernel),
      network_(network),
      owner_(owner),
      alpha_net_(alpha_net),
      interval_(interval) {
  if (!(alpha_net > 0.0 && alpha_net <= 1.0)) throw ConfigError("alpha_net must be in (0, 1]");
  if (interval <= 0) throw ConfigError("probe interval must be positive");
}

void RttMonitor::start() {
  if (running_) return;
  running_ = true;
  ++generation_;
  const auto n = static_cast<SiteId>(network_.profile().site_count());
  for (SiteId dst = 0; dst < n; ++dst) {
    if (dst == owner_) continue;
    probe_tick(dst);
  }
}

void RttMonitor::stop() {
  running_ = false;
  ++generation_;
}

void RttMonitor::reset() {
  stop();
  estimates_.clear();
}

void RttMonitor::probe_tick(SiteId dst) {
  if (!running_) return;
  Message probe;
  probe.kind = MsgKind::kProbe;
  probe.src = owner_;
  probe.dst = dst;
  probe.probe_sent_at = kernel_.now();
  network_.send(std::move(probe));
  const std::uint64_t gen = generation_;
  kernel_.schedule_after(
      interval_,
      [this, dst, gen]() {
        if (gen == generation_) probe_tick(dst);
      },
      "probe_tick", owner_);
}

void RttMonitor::on_probe_reply(const Message& reply) {
  const Duration sample = kernel_.now() - reply.probe_sent_at;
  auto [it, inserted] = estimates_.try_emplace(reply.src);
  RttEstimate& e = it->second;
  e.dst = reply.src;
  e.alpha_net = alpha_net_;
  if (e.samples == 0) {
    e.ewma_rtt = sample;
  } else {
    const double v = alpha_net_ * static_cast<double>(e.ewma_rtt) +
                     (1.0 - alpha_net_) * static_cast<double>(sample);
    e.ewma_rtt = std::llround(v);
  }
  e.last_sample_at = kernel_.now();
  ++e.samples;
}

Duration RttMonitor::estimated_rtt(SiteId dst) const {
  if (auto it = estimates_.find(dst); it != estimates_.end() && it->second.samples > 0) {
    return it->second.ewma_rtt;
  }
  return network_.profile().rtt(owner_, dst, kernel_.now());
}

std::optional<RttEstimate> RttMonitor::estimate(SiteId dst) const {
  if (auto it = estimates_.find(dst); it != estimates_.end()) return it->second;
  return std::nullopt;
}

}  // namespace geotxn
