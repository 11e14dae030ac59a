#pragma once

#include <cstdint>
#include <random>

namespace acrl {

/// SplitMix64 finalizer. Used to derive independent substream keys from a
/// master seed plus a path of integers (purpose tag, iteration, indices...),
/// so parallel workers can seed their own engines without coordination.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t word) {
  return mix64(key ^ mix64(word));
}

template <typename... Words>
std::uint64_t derive_key(std::uint64_t key, std::uint64_t word, Words... rest) {
  return derive_key(derive_key(key, word), rest...);
}

// Stream purpose tags. Keys derived with different tags never collide with
// keys derived for another purpose at the same indices.
namespace stream {
inline constexpr std::uint64_t kScene = 0x01;
inline constexpr std::uint64_t kQuestion = 0x02;
inline constexpr std::uint64_t kCaption = 0x03;
inline constexpr std::uint64_t kPostAction = 0x04;
inline constexpr std::uint64_t kTrainPrompt = 0x10;
inline constexpr std::uint64_t kTrainEpisode = 0x11;
inline constexpr std::uint64_t kEvalEpisode = 0x20;
inline constexpr std::uint64_t kOracleEpisode = 0x30;
// Sub-roles of a post-action stream.
inline constexpr std::uint64_t kAskDraw = 0x41;
inline constexpr std::uint64_t kPickDraw = 0x42;
inline constexpr std::uint64_t kGuessDraw = 0x43;
inline constexpr std::uint64_t kDenyDraw = 0x44;
}  // namespace stream

/// Deterministic random stream. Wraps the standard-specified mt19937_64 with
/// hand-rolled uniform helpers so outputs are identical across platforms and
/// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : engine_(key) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Unbiased integer in [0, n) via rejection sampling.
  int uniform_int(int n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace acrl
