#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hfn/common.hpp"
#include "hfn/tensor.hpp"

namespace hfn {

// Counter-based PRNG (Philox4x32-10). Every random tensor in a model is a pure
// function of (seed, stream, purpose, draw index), so any layer can be
// regenerated in isolation. The algorithm id below is written into the
// checkpoint format; bump it if the generator ever changes.
inline constexpr uint16_t kPrngAlgorithmId = 1;  // philox4x32-10
inline constexpr const char* kPrngAlgorithmName = "philox4x32-10";

namespace detail {

inline void philox_mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
  uint64_t p = static_cast<uint64_t>(a) * b;
  hi = static_cast<uint32_t>(p >> 32);
  lo = static_cast<uint32_t>(p);
}

inline std::array<uint32_t, 4> philox_round(std::array<uint32_t, 4> c, std::array<uint32_t, 2> k) {
  uint32_t hi0, lo0, hi1, lo1;
  philox_mulhilo(0xD2511F53u, c[0], hi0, lo0);
  philox_mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

inline std::array<uint32_t, 4> philox4x32_10(std::array<uint32_t, 4> counter,
                                             std::array<uint32_t, 2> key) {
  counter = detail::philox_round(counter, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
    counter = detail::philox_round(counter, key);
  }
  return counter;
}

// Purpose tags partition the counter space so that e.g. augmentation draws can
// never perturb weight generation.
enum class RngPurpose : uint32_t {
  weights = 0,
  scores = 1,
  augment = 2,
  data_templates = 3,
  data_noise = 4,
  shuffle = 5,
  probe = 6,
};

class RngStream {
 public:
  RngStream(uint64_t seed, uint32_t stream, RngPurpose purpose)
      : seed_(seed), stream_(stream), purpose_(static_cast<uint32_t>(purpose)) {}

  uint64_t seed() const { return seed_; }
  uint64_t draw_count() const { return draws_; }

  uint32_t next_u32() {
    uint64_t block = draws_ >> 2;
    int lane = static_cast<int>(draws_ & 3);
    if (lane == 0 || block != buffered_block_ || !buffer_valid_) {
      buffer_ = philox4x32_10({static_cast<uint32_t>(block), static_cast<uint32_t>(block >> 32),
                               stream_, purpose_},
                              {static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32)});
      buffered_block_ = block;
      buffer_valid_ = true;
    }
    ++draws_;
    return buffer_[lane];
  }

  // Uniform on (0,1); consumes one 32-bit draw.
  double uniform01() { return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32; }

  // Standard normal via Box-Muller; consumes exactly two 32-bit draws.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n); consumes one draw.
  uint32_t below(uint32_t n) {
    return static_cast<uint32_t>((static_cast<uint64_t>(next_u32()) * n) >> 32);
  }

 private:
  uint64_t seed_;
  uint32_t stream_;
  uint32_t purpose_;
  uint64_t draws_ = 0;
  std::array<uint32_t, 4> buffer_{};
  uint64_t buffered_block_ = ~0ull;
  bool buffer_valid_ = false;
};

enum class InitKind { kaiming_normal, signed_constant, kaiming_uniform_scores };

struct InitSpec {
  InitKind kind = InitKind::signed_constant;
  int64_t fan_in = 0;
  double gain = M_SQRT2;  // ReLU gain

  double sigma() const {
    if (fan_in <= 0) throw ConfigError("init: fan_in must be positive");
    return gain * std::sqrt(1.0 / static_cast<double>(fan_in));
  }
};

// Draw bookkeeping (normative for regeneration): kaiming_normal consumes two
// 32-bit draws per element, signed_constant and kaiming_uniform one.
template <typename T>
Tensor<T> init_weights(const InitSpec& spec, const std::vector<int>& shape, RngStream& rng) {
  Tensor<T> out(shape);
  const double sigma = spec.sigma();
  switch (spec.kind) {
    case InitKind::kaiming_normal:
      for (auto& v : out.data) v = static_cast<T>(sigma * rng.normal());
      break;
    case InitKind::signed_constant:
      for (auto& v : out.data) v = static_cast<T>(rng.uniform01() < 0.5 ? -sigma : sigma);
      break;
    case InitKind::kaiming_uniform_scores: {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
      for (auto& v : out.data) v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * bound);
      break;
    }
  }
  return out;
}

template <typename T>
Tensor<T> init_scores(const std::vector<int>& shape, int64_t fan_in, RngStream& rng) {
  InitSpec spec;
  spec.kind = InitKind::kaiming_uniform_scores;
  spec.fan_in = fan_in;
  return init_weights<T>(spec, shape, rng);
}

}  // namespace hfn
