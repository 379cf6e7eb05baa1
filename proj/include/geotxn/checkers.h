#pragma once

#include <map>
#include <string>
#include <vector>

#include "geotxn/trace.h"

namespace geotxn {

enum class TxnClass { kCommitted, kAborted, kNotStarted, kViolation };

const char* to_string(TxnClass c);

struct AtomicityReport {
  bool ok = true;
  std::vector<std::string> violations;
  // Every tid seen in the trace.
  std::map<TxnId, TxnClass> classification;

  std::size_t count(TxnClass c) const;
};

// Per transaction: every participant reached a final state, all final
// states agree with each other and with the logged decision, a
// multi-site commit was logged after every participant prepared, no
// site finalized twice and at most one decision was logged.
AtomicityReport check_atomicity(const std::vector<TraceEvent>& events);

struct SerializabilityReport {
  bool ok = true;
  std::size_t committed = 0;
  std::size_t edges = 0;
  // Transactions along a conflict cycle, first repeated at the end.
  std::vector<TxnId> cycle;
};

// Conflict graph over committed transactions from the per-key order of
// lock grants; serializable iff acyclic.
SerializabilityReport check_serializability(const std::vector<TraceEvent>& events);

}  // namespace geotxn
