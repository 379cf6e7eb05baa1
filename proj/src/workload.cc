#include "geotxn/workload.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <set>

namespace geotxn {

ZipfSampler::ZipfSampler(std::uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0) throw ConfigError("zipf: empty range");
  if (!(theta >= 0.0)) throw ConfigError("zipf: theta must be >= 0");
  cdf_.resize(n);
  double acc = 0.0;
  for (std::uint64_t k = 0; k < n; ++k) {
    acc += std::pow(static_cast<double>(k + 1), -theta);
    cdf_[k] = acc;
  }
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::uint64_t ZipfSampler::sample(RngStream& rng) const {
  const double u = rng.next();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::uint64_t>(it - cdf_.begin());
}

std::shared_ptr<const ZipfSampler> ZipfSampler::shared(std::uint64_t n, double theta) {
  static std::mutex mu;
  static std::map<std::pair<std::uint64_t, double>, std::shared_ptr<const ZipfSampler>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{n, theta}];
  if (!slot) slot = std::make_shared<const ZipfSampler>(n, theta);
  return slot;
}

double ZipfSampler::probability(std::uint64_t rank) const {
  if (rank >= n_) return 0.0;
  return rank == 0 ? cdf_[0] : cdf_[rank] - cdf_[rank - 1];
}

void WorkloadConfig::validate(std::size_t data_sources) const {
  if (terminals < 1) throw ConfigError("workload.terminals must be >= 1");
  if (ops_per_txn < 1) throw ConfigError("workload.ops_per_txn must be >= 1");
  if (!(read_fraction >= 0.0 && read_fraction <= 1.0)) {
    throw ConfigError("workload.read_fraction must be in [0, 1]");
  }
  if (!(dist_txn_ratio >= 0.0 && dist_txn_ratio <= 1.0)) {
    throw ConfigError("workload.dist_txn_ratio must be in [0, 1]");
  }
  if (!(client_abort_ratio >= 0.0 && client_abort_ratio <= 1.0)) {
    throw ConfigError("workload.client_abort_ratio must be in [0, 1]");
  }
  if (!(skew_theta >= 0.0)) throw ConfigError("workload.skew_theta must be >= 0");
  if (rounds < 1) throw ConfigError("workload.rounds must be >= 1");
  if (keyspace < 1) throw ConfigError("workload.keyspace must be >= 1");
  if (duration < 0) throw ConfigError("workload.duration must be >= 0");
  if (data_sources == 0) throw ConfigError("topology has no data sources");
  for (const auto* pool : {&centralized_sites, &distributed_sites}) {
    for (SiteId s : *pool) {
      if (s < 1 || static_cast<std::size_t>(s) > data_sources) {
        throw ConfigError("workload: site " + std::to_string(s) + " is not a data source");
      }
    }
  }
  if (dist_txn_ratio > 0.0) {
    const std::size_t pool = distributed_sites.empty() ? data_sources : distributed_sites.size();
    if (participants < 2 || static_cast<std::size_t>(participants) > pool) {
      throw ConfigError("workload.participants must be in [2, number of eligible sites]");
    }
    if (participants > ops_per_txn) {
      throw ConfigError("workload.participants must not exceed ops_per_txn");
    }
  }
  if (static_cast<std::uint64_t>(ops_per_txn) > static_cast<std::uint64_t>(keyspace)) {
    throw ConfigError("workload.ops_per_txn exceeds the keyspace");
  }
}

double preset_theta(const std::string& name) {
  if (name == "lc") return 0.3;
  if (name == "mc") return 0.9;
  if (name == "hc") return 1.5;
  throw ConfigError("unknown workload preset '" + name + "' (expected lc, mc or hc)");
}

namespace {

std::vector<SiteId> pool_or_all(const std::vector<SiteId>& pool, std::size_t n) {
  if (!pool.empty()) {
    std::set<SiteId> uniq(pool.begin(), pool.end());
    return {uniq.begin(), uniq.end()};
  }
  std::vector<SiteId> all;
  for (std::size_t s = 1; s <= n; ++s) all.push_back(static_cast<SiteId>(s));
  return all;
}

}  // namespace

WorkloadGenerator::WorkloadGenerator(WorkloadConfig config, std::size_t data_sources,
                                     SimKernel& kernel)
    : config_(std::move(config)), data_sources_(data_sources) {
  config_.validate(data_sources_);
  central_pool_ = pool_or_all(config_.centralized_sites, data_sources_);
  dist_pool_ = pool_or_all(config_.distributed_sites, data_sources_);
  zipf_ = ZipfSampler::shared(static_cast<std::uint64_t>(config_.keyspace), config_.skew_theta);
  for (int t = 0; t < config_.terminals; ++t) {
    streams_.emplace_back(kernel.rng("wl.terminal." + std::to_string(t)).next_u64());
  }
}

RngStream& WorkloadGenerator::stream(int terminal) {
  return streams_.at(static_cast<std::size_t>(terminal));
}

Key WorkloadGenerator::key_of(SiteId site, std::uint64_t rank) const {
  return static_cast<Key>(site - 1) * config_.keyspace + static_cast<Key>(rank);
}

SiteId WorkloadGenerator::site_of(Key key) const {
  return static_cast<SiteId>(key / config_.keyspace) + 1;
}

std::vector<SiteId> WorkloadGenerator::pick_sites(RngStream& rng,
                                                  const std::vector<SiteId>& pool, int count) {
  // Partial Fisher-Yates over a copy of the pool.
  std::vector<SiteId> sites = pool;
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(sites.size() - static_cast<std::size_t>(i));
    std::swap(sites[static_cast<std::size_t>(i)], sites[j]);
  }
  sites.resize(static_cast<std::size_t>(count));
  return sites;
}

Transaction WorkloadGenerator::next_transaction(int terminal) {
  RngStream& rng = stream(terminal);
  const bool distributed = rng.next() < config_.dist_txn_ratio;
  const std::vector<SiteId> sites = distributed
                                        ? pick_sites(rng, dist_pool_, config_.participants)
                                        : pick_sites(rng, central_pool_, 1);

  // Operation i lands on sites[i % k], so every participant gets one.
  std::map<SiteId, std::vector<Op>> per_site;
  std::map<SiteId, std::set<std::uint64_t>> used;
  for (int i = 0; i < config_.ops_per_txn; ++i) {
    const SiteId site = sites[static_cast<std::size_t>(i) % sites.size()];
    std::uint64_t rank = zipf_->sample(rng);
    while (!used[site].insert(rank).second) rank = zipf_->sample(rng);
    const bool write = rng.next() >= config_.read_fraction;
    per_site[site].push_back(Op{key_of(site, rank), write});
  }

  Transaction txn;
  txn.client_abort = config_.client_abort_ratio > 0.0 && rng.next() < config_.client_abort_ratio;
  const auto rounds = static_cast<std::size_t>(config_.rounds);
  txn.rounds.resize(rounds);
  for (auto& [site, ops] : per_site) {
    std::sort(ops.begin(), ops.end(), [](const Op& a, const Op& b) { return a.key < b.key; });
    const std::size_t n = ops.size();
    std::size_t last_round = 0;
    for (std::size_t r = 0; r < rounds; ++r) {
      if (r * n / rounds < (r + 1) * n / rounds) last_round = r;
    }
    for (std::size_t r = 0; r < rounds; ++r) {
      const std::size_t lo = r * n / rounds;
      const std::size_t hi = (r + 1) * n / rounds;
      if (lo == hi) continue;
      txn.rounds[r].push_back(
          Statement{site, {ops.begin() + static_cast<std::ptrdiff_t>(lo),
                           ops.begin() + static_cast<std::ptrdiff_t>(hi)},
                    r == last_round});
    }
  }
  txn.rounds.erase(std::remove_if(txn.rounds.begin(), txn.rounds.end(),
                                  [](const auto& r) { return r.empty(); }),
                   txn.rounds.end());
  return txn;
}

}  // namespace geotxn
