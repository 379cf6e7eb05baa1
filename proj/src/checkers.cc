#include "geotxn/checkers.h"

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>

namespace geotxn {

const char* to_string(TxnClass c) {
  switch (c) {
    case TxnClass::kCommitted: return "committed";
    case TxnClass::kAborted: return "aborted";
    case TxnClass::kNotStarted: return "not_started";
    case TxnClass::kViolation: return "violation";
  }
  return "?";
}

std::size_t AtomicityReport::count(TxnClass c) const {
  return static_cast<std::size_t>(std::count_if(classification.begin(), classification.end(),
                                                [c](const auto& kv) { return kv.second == c; }));
}

namespace {

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

struct SiteHistory {
  std::vector<std::string> finals;
  std::optional<SimTime> prepared_at;
  SimTime last_final_at = 0;
};

struct TxnHistory {
  std::map<SiteId, SiteHistory> sites;
  std::vector<std::pair<SimTime, bool>> log;  // (time, commit)
  std::vector<SimTime> rollbacked_at;
  std::optional<bool> outcome_commit;
};

}  // namespace

AtomicityReport check_atomicity(const std::vector<TraceEvent>& events) {
  std::map<TxnId, TxnHistory> txns;
  for (const auto& e : events) {
    if (e.tid == 0) continue;
    TxnHistory& h = txns[e.tid];
    const auto tok = tokens(e.event);
    if (tok.empty()) continue;
    if (e.site != 0) {
      SiteHistory& s = h.sites[e.site];
      if (tok[0] == "final" && tok.size() >= 2) {
        s.finals.push_back(tok[1]);
        s.last_final_at = e.time;
      } else if ((tok[0] == "prepared" || tok[0] == "idle") && !s.prepared_at) {
        s.prepared_at = e.time;
      }
      continue;
    }
    if (tok[0] == "log" && tok.size() >= 2) {
      h.log.emplace_back(e.time, tok[1] == "commit");
    } else if (tok[0] == "recv" && tok.size() >= 2 && tok[1] == "rollbacked") {
      h.rollbacked_at.push_back(e.time);
    } else if (tok[0] == "outcome" && tok.size() >= 2) {
      h.outcome_commit = tok[1] == "committed";
    }
  }

  AtomicityReport report;
  for (const auto& [tid, h] : txns) {
    std::vector<std::string> bad;
    auto fail = [&](const std::string& what) {
      bad.push_back("tid " + std::to_string(tid) + ": " + what);
    };
    std::set<std::string> outcomes;
    for (const auto& [site, s] : h.sites) {
      if (s.finals.empty()) {
        fail("site " + std::to_string(site) + " never reached a final state");
      } else if (s.finals.size() > 1) {
        fail("site " + std::to_string(site) + " finalized " + std::to_string(s.finals.size()) +
             " times");
      }
      outcomes.insert(s.finals.begin(), s.finals.end());
    }
    if (outcomes.size() > 1) fail("mixed outcome across participants");
    if (h.log.size() > 1) fail("decision logged more than once");

    const bool any_commit = outcomes.count("committed") != 0;
    if (!h.log.empty()) {
      const bool logged_commit = h.log.front().second;
      if (logged_commit && outcomes.count("aborted") != 0) fail("aborted after a logged commit");
      if (!logged_commit && any_commit) fail("committed after a logged abort");
      if (logged_commit) {
        const SimTime at = h.log.front().first;
        for (const auto& [site, s] : h.sites) {
          if (!s.prepared_at || *s.prepared_at > at) {
            fail("commit logged before site " + std::to_string(site) + " voted yes");
          }
        }
        for (SimTime t : h.rollbacked_at) {
          if (t >= at) fail("rollback acknowledged after a logged commit");
        }
      }
    } else if (any_commit && h.sites.size() > 1) {
      fail("multi-site commit without a logged decision");
    }
    if (h.outcome_commit) {
      if (*h.outcome_commit && outcomes.count("aborted") != 0) {
        fail("client told committed but a participant aborted");
      }
      if (!*h.outcome_commit && any_commit) fail("client told aborted but a participant committed");
    }

    TxnClass cls = TxnClass::kNotStarted;
    if (!bad.empty()) {
      cls = TxnClass::kViolation;
    } else if (any_commit) {
      cls = TxnClass::kCommitted;
    } else if (!h.sites.empty() || !h.log.empty() || (h.outcome_commit && !*h.outcome_commit)) {
      cls = TxnClass::kAborted;
    }
    report.classification[tid] = cls;
    report.violations.insert(report.violations.end(), bad.begin(), bad.end());
  }
  report.ok = report.violations.empty();
  return report;
}

SerializabilityReport check_serializability(const std::vector<TraceEvent>& events) {
  std::set<TxnId> committed;
  for (const auto& e : events) {
    if (e.site != 0 && e.event == "final committed") committed.insert(e.tid);
  }

  struct KeyState {
    std::optional<TxnId> writer;
    std::vector<TxnId> readers;
  };
  std::map<Key, KeyState> keys;
  std::map<TxnId, std::set<TxnId>> graph;
  SerializabilityReport report;
  report.committed = committed.size();
  auto edge = [&](TxnId from, TxnId to) {
    if (from != to && graph[from].insert(to).second) ++report.edges;
  };

  for (const auto& e : events) {
    if (e.site == 0 || committed.count(e.tid) == 0) continue;
    const auto tok = tokens(e.event);
    if (tok.size() != 3 || tok[0] != "lock") continue;
    const Key key = std::stoll(tok[1]);
    const bool write = tok[2] == "X";
    KeyState& k = keys[key];
    if (k.writer) edge(*k.writer, e.tid);
    if (write) {
      for (TxnId r : k.readers) edge(r, e.tid);
      k.readers.clear();
      k.writer = e.tid;
    } else {
      k.readers.push_back(e.tid);
    }
  }

  // Iterative DFS; a back edge closes a cycle.
  enum class Color { kWhite, kGrey, kBlack };
  std::map<TxnId, Color> color;
  for (TxnId t : committed) color[t] = Color::kWhite;
  for (TxnId root : committed) {
    if (color[root] != Color::kWhite) continue;
    std::vector<std::pair<TxnId, std::set<TxnId>::const_iterator>> stack;
    color[root] = Color::kGrey;
    stack.emplace_back(root, graph[root].cbegin());
    while (!stack.empty()) {
      auto& [node, it] = stack.back();
      if (it == graph[node].cend()) {
        color[node] = Color::kBlack;
        stack.pop_back();
        continue;
      }
      const TxnId next = *it++;
      if (color[next] == Color::kGrey) {
        auto start = std::find_if(stack.begin(), stack.end(),
                                  [next](const auto& f) { return f.first == next; });
        for (auto f = start; f != stack.end(); ++f) report.cycle.push_back(f->first);
        report.cycle.push_back(next);
        report.ok = false;
        return report;
      }
      if (color[next] == Color::kWhite) {
        color[next] = Color::kGrey;
        stack.emplace_back(next, graph[next].cbegin());
      }
    }
  }
  return report;
}

}  // namespace geotxn
