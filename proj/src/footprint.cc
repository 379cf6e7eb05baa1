#include "geotxn/footprint.h"

namespace geotxn {

HotspotFootprint::HotspotFootprint(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("footprint capacity must be positive");
}

const HotspotEntry* HotspotFootprint::find(Key key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second.entry;
}

HotspotEntry& HotspotFootprint::touch(Key key) {
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
    return it->second.entry;
  }
  if (entries_.size() >= capacity_) {
    entries_.erase(lru_.back());
    lru_.pop_back();
    ++evictions_;
  }
  lru_.push_front(key);
  Node node;
  node.entry.key = key;
  node.lru_pos = lru_.begin();
  return entries_.emplace(key, node).first->second.entry;
}

std::vector<HotspotEntry> HotspotFootprint::range(Key lo, Key hi) const {
  std::vector<HotspotEntry> out;
  for (auto it = entries_.lower_bound(lo); it != entries_.end() && it->first <= hi; ++it) {
    out.push_back(it->second.entry);
  }
  return out;
}

void HotspotFootprint::clear() {
  entries_.clear();
  lru_.clear();
}

}  // namespace geotxn
