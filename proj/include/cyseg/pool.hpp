#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cyseg/domain.hpp"
#include "cyseg/rng.hpp"

namespace cyseg {

enum class PoolPolicy {
  kUniform,   // ring overwrite, uniform read over current contents
  kKeepOrSwap // 50/50 return-new-or-swap once full (history-of-images style)
};

// Fixed-capacity store of generated images feeding the discriminator.
// Images are plain value tensors here, so inserting one is already a
// detach: nothing in this buffer links back to generator activations.
class ImagePool {
 public:
  explicit ImagePool(int capacity = 50, std::uint64_t seed = 0,
                     PoolPolicy policy = PoolPolicy::kUniform)
      : capacity_(capacity), rng_(seed), policy_(policy) {
    if (capacity < 1) throw std::invalid_argument("ImagePool: capacity must be >= 1");
    storage_.reserve(capacity);
  }

  int size() const { return static_cast<int>(storage_.size()); }
  int capacity() const { return capacity_; }

  Image push_and_sample(const Image& x) {
    if (policy_ == PoolPolicy::kKeepOrSwap) return push_keep_or_swap_(x);
    if (size() < capacity_) {
      storage_.push_back(x);
    } else {
      storage_[cursor_] = x;
      cursor_ = (cursor_ + 1) % capacity_;
    }
    auto k = rng_.uniform_int(0, size() - 1);
    return storage_[static_cast<size_t>(k)];
  }

  const Image& slot(int i) const { return storage_.at(i); }
  int cursor() const { return cursor_; }

  // Checkpoint restore: replaces contents and the overwrite position.
  void restore(std::vector<Image> images, int cursor) {
    if (static_cast<int>(images.size()) > capacity_ || cursor < 0 || cursor >= capacity_)
      throw std::invalid_argument("ImagePool: restore state inconsistent with capacity");
    storage_ = std::move(images);
    cursor_ = cursor;
  }

  Rng& rng() { return rng_; }

 private:
  // Classic keep-or-swap history policy, kept behind a switch for
  // comparison: before the pool is full, store and return the new image;
  // afterwards return the new image half the time, otherwise swap it with
  // a random stored one and return the evictee.
  Image push_keep_or_swap_(const Image& x) {
    if (size() < capacity_) {
      storage_.push_back(x);
      return x;
    }
    if (rng_.uniform() < 0.5) return x;
    auto k = static_cast<size_t>(rng_.uniform_int(0, capacity_ - 1));
    Image out = storage_[k];
    storage_[k] = x;
    return out;
  }

  int capacity_;
  std::vector<Image> storage_;
  int cursor_ = 0;
  Rng rng_;
  PoolPolicy policy_;
};

}  // namespace cyseg
