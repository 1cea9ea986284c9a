#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sfe {

/// Indices of features, in the order chosen by the caller.
using FeatureSet = std::vector<int>;

/// Base class of every error surfaced by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Returns a sorted, duplicate-free copy of the subset.
inline FeatureSet canonical_subset(std::span<const int> subset)
{
  FeatureSet out(subset.begin(), subset.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Seed derivation. Every random stream in the library is keyed by
// mix_seed(parent, tag...) so runs never depend on ambient entropy.

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, Rest... rest)
{
  return mix_seed(splitmix64(seed ^ splitmix64(tag + 0x632BE59BD9B4E019ULL)), rest...);
}

inline std::uint64_t hash_subset(std::uint64_t seed, std::span<const int> canonical)
{
  std::uint64_t h = splitmix64(seed ^ 0xA0761D6478BD642FULL);
  for (int f : canonical)
    h = splitmix64(h ^ static_cast<std::uint64_t>(f + 1));
  return splitmix64(h ^ canonical.size());
}

/// FNV-1a over raw bytes; stable across runs and platforms of equal endianness.
class Fnv1a {
public:
  void update(const void* data, std::size_t size)
  {
    auto bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001B3ULL;
    }
  }
  template <typename T>
  void update_value(const T& v) { update(&v, sizeof(T)); }
  std::uint64_t digest() const { return state_; }

private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

/// Unbiased integer in [0, n). The std distributions are implementation
/// defined, so outputs would differ between standard libraries.
inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

/// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any task is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn)
{
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
        next.store(count);
      }
    }
  };
  std::vector<std::jthread> pool;
  const unsigned n = std::min<std::size_t>(threads, count);
  for (unsigned t = 0; t < n; ++t)
    pool.emplace_back(worker);
  pool.clear();
  if (failure)
    std::rethrow_exception(failure);
}

inline unsigned default_threads()
{
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

} // namespace sfe
