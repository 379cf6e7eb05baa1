#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "geotxn/trace.h"

// Independent evaluators used as test oracles: explicit loops over the
// definitions, sharing no code with the library.
namespace geotxn::testing {

inline double brute_basic(const std::map<SiteId, double>& rtt, SiteId target) {
  double best = -1;
  for (const auto& kv : rtt) best = kv.second > best ? kv.second : best;
  return best - rtt.at(target);
}

inline double brute_adv(const std::map<SiteId, double>& rtt, const std::map<SiteId, double>& lel,
                        SiteId target) {
  double best = -1;
  for (const auto& kv : rtt) {
    const double v = kv.second + lel.at(kv.first);
    if (v > best) best = v;
  }
  const double d = best - (rtt.at(target) + lel.at(target));
  return d < 0 ? 0 : d;
}

struct Counters {
  std::uint64_t t, c;
  std::int64_t a;
};

inline double brute_abort(const std::vector<Counters>& keys) {
  double prod = 1;
  for (const auto& k : keys) {
    if (k.t == 0) continue;
    const double ratio = static_cast<double>(k.c) / static_cast<double>(k.t);
    for (std::int64_t i = 1; i < k.a; ++i) prod *= ratio;
  }
  return 1 - prod;
}

struct Access {
  TxnId tid;
  Key key;
  bool write;
};

// Lock events for the accesses in order, then a commit for every txn.
inline std::vector<TraceEvent> history(const std::vector<Access>& ops) {
  std::vector<TraceEvent> ev;
  SimTime t = 0;
  std::set<TxnId> tids;
  for (const auto& a : ops) {
    ev.push_back({t++, a.tid, 1, "lock " + std::to_string(a.key) + (a.write ? " X" : " S")});
    tids.insert(a.tid);
  }
  for (TxnId tid : tids) ev.push_back({t++, tid, 1, "final committed"});
  return ev;
}

// Tries every serial order against every conflicting pair.
inline bool serial_order_exists(const std::vector<Access>& ops) {
  std::vector<TxnId> txns;
  for (const auto& a : ops) {
    if (std::find(txns.begin(), txns.end(), a.tid) == txns.end()) txns.push_back(a.tid);
  }
  std::sort(txns.begin(), txns.end());
  do {
    std::map<TxnId, std::size_t> pos;
    for (std::size_t i = 0; i < txns.size(); ++i) pos[txns[i]] = i;
    bool ok = true;
    for (std::size_t i = 0; i < ops.size() && ok; ++i) {
      for (std::size_t j = i + 1; j < ops.size() && ok; ++j) {
        const auto& a = ops[i];
        const auto& b = ops[j];
        if (a.tid != b.tid && a.key == b.key && (a.write || b.write)) {
          ok = pos[a.tid] < pos[b.tid];
        }
      }
    }
    if (ok) return true;
  } while (std::next_permutation(txns.begin(), txns.end()));
  return false;
}

}  // namespace geotxn::testing
