#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace geotxn {

// Virtual time in microseconds.
using SimTime = std::int64_t;
using Duration = std::int64_t;

using SiteId = int;
using TxnId = std::uint64_t;
using Key = std::int64_t;

// The middleware always lives at site 0; data sources are 1..n.
inline constexpr SiteId kCoordinatorSite = 0;

inline constexpr Duration kMicrosPerMilli = 1000;
inline constexpr Duration kMicrosPerSecond = 1000 * 1000;

inline Duration from_millis(double ms) {
  return static_cast<Duration>(std::llround(ms * static_cast<double>(kMicrosPerMilli)));
}

inline double to_millis(Duration us) {
  return static_cast<double>(us) / static_cast<double>(kMicrosPerMilli);
}

enum class LockMode { kShared, kExclusive };

struct Op {
  Key key = 0;
  bool write = false;

  bool operator==(const Op&) const = default;
};

// Raised when an operation is invoked outside its protocol state.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AbortReason {
  kNone,
  kAdmission,
  kLockTimeout,
  kPeerFailure,
  kSiteFailure,
  kCoordinatorFailure,
  kClient,
};

const char* to_string(AbortReason reason);
AbortReason abort_reason_from_string(const std::string& s);

}  // namespace geotxn
