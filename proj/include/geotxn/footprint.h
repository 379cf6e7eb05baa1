#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <vector>

#include "geotxn/types.h"

namespace geotxn {

struct HotspotEntry {
  Key key = 0;
  double w_lat = 0.0;    // weighted average access latency, microseconds
  std::uint64_t t_cnt = 0;  // transactions that accessed the record
  std::uint64_t c_cnt = 0;  // committed transactions that accessed it
  std::int64_t a_cnt = 0;   // transactions currently accessing it
};

/// Per-record hotspot statistics in a balanced ordered map (logarithmic
/// point and range lookups) with LRU eviction at capacity.
class HotspotFootprint {
 public:
  explicit HotspotFootprint(std::size_t capacity = 4096);

  // Lookup without refreshing recency.
  const HotspotEntry* find(Key key) const;
  // Lookup-or-insert; marks the entry most recently used and may evict
  // the least recently used one.
  HotspotEntry& touch(Key key);
  std::vector<HotspotEntry> range(Key lo, Key hi) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t evictions() const { return evictions_; }
  void clear();

 private:
  struct Node {
    HotspotEntry entry;
    std::list<Key>::iterator lru_pos;
  };

  std::size_t capacity_;
  std::map<Key, Node> entries_;
  std::list<Key> lru_;  // front = most recently used
  std::uint64_t evictions_ = 0;
};

}  // namespace geotxn
