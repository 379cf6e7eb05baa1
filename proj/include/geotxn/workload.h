#pragma once

#include <memory>
#include <string>
#include <vector>

#include "geotxn/coordinator.h"
#include "geotxn/sim_kernel.h"

namespace geotxn {

/// Zipf(theta) over ranks 0..n-1 (rank 0 hottest) by inverse transform on
/// the exact cumulative distribution. Any theta >= 0 works; theta == 0 is
/// uniform.
class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double theta);
  // Process-wide cache; building the table is O(n).
  static std::shared_ptr<const ZipfSampler> shared(std::uint64_t n, double theta);

  std::uint64_t sample(RngStream& rng) const;
  // Exact probability of a rank.
  double probability(std::uint64_t rank) const;
  std::uint64_t size() const { return n_; }
  double theta() const { return theta_; }

 private:
  std::uint64_t n_;
  double theta_;
  std::vector<double> cdf_;
};

struct WorkloadConfig {
  int terminals = 64;
  int ops_per_txn = 5;
  double read_fraction = 0.5;
  double skew_theta = 0.9;
  double dist_txn_ratio = 0.5;
  // Data sources touched by a distributed transaction.
  int participants = 2;
  int rounds = 1;
  // Records per data source.
  std::int64_t keyspace = 1000000;
  // Completions after which terminals stop; 0 = unbounded.
  std::uint64_t txn_budget = 0;
  // Virtual time after which terminals stop submitting; 0 = unbounded.
  Duration duration = 0;
  double client_abort_ratio = 0.0;
  // Sites eligible for single-site and multi-site transactions; empty
  // means every data source.
  std::vector<SiteId> centralized_sites;
  std::vector<SiteId> distributed_sites;

  void validate(std::size_t data_sources) const;
};

// Skew presets for low, medium and high contention.
double preset_theta(const std::string& name);

class WorkloadGenerator {
 public:
  WorkloadGenerator(WorkloadConfig config, std::size_t data_sources, SimKernel& kernel);

  // Next transaction of a terminal; tid is left 0 for the caller.
  Transaction next_transaction(int terminal);

  // Global key of a rank on a data source: (site - 1) * keyspace + rank.
  Key key_of(SiteId site, std::uint64_t rank) const;
  SiteId site_of(Key key) const;
  const WorkloadConfig& config() const { return config_; }

 private:
  RngStream& stream(int terminal);
  std::vector<SiteId> pick_sites(RngStream& rng, const std::vector<SiteId>& pool, int count);

  WorkloadConfig config_;
  std::size_t data_sources_;
  std::vector<SiteId> central_pool_;
  std::vector<SiteId> dist_pool_;
  std::shared_ptr<const ZipfSampler> zipf_;
  std::vector<RngStream> streams_;
};

}  // namespace geotxn
