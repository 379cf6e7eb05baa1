#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "geotxn/types.h"

namespace geotxn {

using EventId = std::uint64_t;

class SchedulingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Independent, deterministic uniform stream keyed by a label.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of precision.
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// Single-threaded discrete-event kernel. Events are ordered by
/// (fire_at, seq); seq is the insertion counter, so events at equal
/// times fire FIFO. The kernel is the only clock authority.
class SimKernel {
 public:
  using Action = std::function<void()>;

  explicit SimKernel(std::uint64_t seed = 0) : seed_(seed) {}
  SimKernel(const SimKernel&) = delete;
  SimKernel& operator=(const SimKernel&) = delete;

  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  // `label` must outlive the kernel (use string literals).
  EventId schedule(SimTime at, Action action, const char* label = "event",
                   SiteId target = kCoordinatorSite);
  EventId schedule_after(Duration delay, Action action, const char* label = "event",
                         SiteId target = kCoordinatorSite) {
    return schedule(now_ + delay, std::move(action), label, target);
  }
  void cancel(EventId id);

  // Processes every event with fire_at <= limit.
  std::size_t run_until(SimTime limit);
  // Processes events until the queue drains.
  std::size_t run();
  // Processes events while the queue is non-empty and stop() is false;
  // stop is evaluated before each event.
  std::size_t run_while_not(const std::function<bool()>& stop, SimTime limit);

  bool empty() const { return live_.empty(); }
  std::size_t pending() const { return live_.size(); }
  std::uint64_t events_processed() const { return processed_; }

  RngStream& rng(std::string_view stream);
  double rng_next(std::string_view stream) { return rng(stream).next(); }

  // One line per processed event: fire_at_us \t seq \t target \t action.
  void set_event_trace(std::ostream* out) { event_trace_ = out; }

 private:
  struct Event {
    SimTime fire_at;
    EventId seq;
    SiteId target;
    const char* label;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  bool step();

  std::uint64_t seed_;
  SimTime now_ = 0;
  EventId next_seq_ = 1;
  std::uint64_t processed_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<EventId> live_;
  std::unordered_set<EventId> cancelled_;
  std::map<std::string, RngStream, std::less<>> streams_;
  std::ostream* event_trace_ = nullptr;
};

}  // namespace geotxn
