#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace icleval {

// Stream tags keep the seeds of unrelated draws apart.
enum class SeedStream : std::uint64_t {
  kEvalSubsample = 0x1001,
  kSupport = 0x1002,
  kPermutation = 0x1003,
  kDispatchShuffle = 0x1004,
  kBaseline = 0x1005,
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable hash of (master seed, stream, indices...). Every draw in the engine
// seeds its own generator from this, so results never depend on execution order.
std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                          std::initializer_list<std::uint64_t> indices = {});

// mt19937_64 is fully specified by the standard; the standard distributions are
// not, so bounded draws use rejection sampling here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  // Indices of `count` distinct draws from [0, population), in draw order
  // (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count);

 private:
  std::mt19937_64 engine_;
};

}  // namespace icleval
