#include "geotxn/sim_kernel.h"

#include <string>

namespace geotxn {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

EventId SimKernel::schedule(SimTime at, Action action, const char* label, SiteId target) {
  if (at < now_) {
    throw SchedulingError("cannot schedule at " + std::to_string(at) + "us, now is " +
                          std::to_string(now_) + "us");
  }
  const EventId id = next_seq_++;
  queue_.push(Event{at, id, target, label, std::move(action)});
  live_.insert(id);
  return id;
}

void SimKernel::cancel(EventId id) {
  if (live_.erase(id) != 0) cancelled_.insert(id);
}

bool SimKernel::step() {
  while (!queue_.empty()) {
    // priority_queue::top is const; the action is moved out via const_cast
    // right before the pop, which is safe because the element is discarded.
    Event& top = const_cast<Event&>(queue_.top());
    if (auto it = cancelled_.find(top.seq); it != cancelled_.end()) {
      cancelled_.erase(it);
      queue_.pop();
      continue;
    }
    Event ev = std::move(top);
    queue_.pop();
    live_.erase(ev.seq);
    now_ = ev.fire_at;
    ++processed_;
    if (event_trace_ != nullptr) {
      *event_trace_ << ev.fire_at << '\t' << ev.seq << '\t' << ev.target << '\t' << ev.label
                    << '\n';
    }
    ev.action();
    return true;
  }
  return false;
}

std::size_t SimKernel::run_until(SimTime limit) {
  std::size_t n = 0;
  while (!queue_.empty()) {
    const Event& top = queue_.top();
    if (cancelled_.count(top.seq) != 0) {
      cancelled_.erase(top.seq);
      queue_.pop();
      continue;
    }
    if (top.fire_at > limit) break;
    step();
    ++n;
  }
  if (!empty() && limit > now_) now_ = limit;
  return n;
}

std::size_t SimKernel::run() {
  std::size_t n = 0;
  while (step()) ++n;
  return n;
}

std::size_t SimKernel::run_while_not(const std::function<bool()>& stop, SimTime limit) {
  std::size_t n = 0;
  while (!stop()) {
    if (queue_.empty()) break;
    const Event& top = queue_.top();
    if (cancelled_.count(top.seq) != 0) {
      cancelled_.erase(top.seq);
      queue_.pop();
      continue;
    }
    if (top.fire_at > limit) break;
    step();
    ++n;
  }
  return n;
}

RngStream& SimKernel::rng(std::string_view stream) {
  auto it = streams_.find(stream);
  if (it == streams_.end()) {
    const std::uint64_t s = splitmix64(seed_ ^ splitmix64(fnv1a(stream)));
    it = streams_.emplace(std::string(stream), RngStream(s)).first;
  }
  return it->second;
}

}  // namespace geotxn
