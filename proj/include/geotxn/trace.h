#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "geotxn/types.h"

namespace geotxn {

// One protocol event. `event` is a space-separated token list, e.g.
// "lock 42 X", "final committed", "log commit", "outcome aborted lock_timeout".
struct TraceEvent {
  SimTime time = 0;
  TxnId tid = 0;
  SiteId site = 0;
  std::string event;

  bool operator==(const TraceEvent&) const = default;
};

class Trace {
 public:
  void emit(SimTime time, TxnId tid, SiteId site, std::string event) {
    if (enabled_) events_.push_back(TraceEvent{time, tid, site, std::move(event)});
  }

  void set_enabled(bool enabled) { enabled_ = enabled; }
  bool enabled() const { return enabled_; }
  const std::vector<TraceEvent>& events() const { return events_; }
  void clear() { events_.clear(); }

  // CSV with header `time_us,tid,site,event`.
  void write_csv(std::ostream& out) const;
  static std::vector<TraceEvent> read_csv(std::istream& in);

 private:
  bool enabled_ = true;
  std::vector<TraceEvent> events_;
};

}  // namespace geotxn
