#pragma once

#include <cstdint>
#include <vector>

namespace xrf::detail {

/// Open-addressing map from packed 64-bit keys to int32 values. Keys are
/// never erased individually; the whole index is rebuilt on compaction.
class FlatIndex {
 public:
  static constexpr uint64_t kEmpty = ~uint64_t{0};

  void clear() {
    keys_.clear();
    values_.clear();
    size_ = 0;
  }

  void reserve(size_t n) {
    size_t cap = 16;
    while (cap < 2 * n) cap <<= 1;
    if (cap > keys_.size()) rehash(cap);
  }

  void insert(uint64_t key, int32_t value) {
    if (2 * (size_ + 1) > keys_.size()) rehash(keys_.empty() ? 16 : 2 * keys_.size());
    size_t slot = probe_start(key);
    while (keys_[slot] != kEmpty && keys_[slot] != key) slot = (slot + 1) & mask_;
    if (keys_[slot] == kEmpty) ++size_;
    keys_[slot] = key;
    values_[slot] = value;
  }

  int32_t find(uint64_t key, int32_t missing = -1) const {
    if (keys_.empty()) return missing;
    size_t slot = probe_start(key);
    while (true) {
      const uint64_t k = keys_[slot];
      if (k == key) return values_[slot];
      if (k == kEmpty) return missing;
      slot = (slot + 1) & mask_;
    }
  }

  size_t size() const { return size_; }

 private:
  size_t probe_start(uint64_t key) const {
    uint64_t h = key * 0x9E3779B97F4A7C15ull;
    h ^= h >> 29;
    return static_cast<size_t>(h) & mask_;
  }

  void rehash(size_t capacity) {
    std::vector<uint64_t> old_keys = std::move(keys_);
    std::vector<int32_t> old_values = std::move(values_);
    keys_.assign(capacity, kEmpty);
    values_.assign(capacity, -1);
    mask_ = capacity - 1;
    size_ = 0;
    for (size_t i = 0; i < old_keys.size(); ++i)
      if (old_keys[i] != kEmpty) insert(old_keys[i], old_values[i]);
  }

  std::vector<uint64_t> keys_;
  std::vector<int32_t> values_;
  size_t mask_ = 0;
  size_t size_ = 0;
};

}  // namespace xrf::detail
