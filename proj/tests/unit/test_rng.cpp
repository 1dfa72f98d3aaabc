#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "hfn/rng.hpp"

using namespace hfn;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Reference vectors from the Random123 test suite.
  auto r0 = philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(r0 == std::array<uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

  auto r1 = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                          {0xffffffffu, 0xffffffffu});
  CHECK(r1 == std::array<uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

  auto r2 = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                          {0xa4093822u, 0x299f31d0u});
  CHECK(r2 == std::array<uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("rng streams are deterministic and independent") {
  RngStream a(123, 7, RngPurpose::weights);
  RngStream b(123, 7, RngPurpose::weights);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());

  RngStream c(123, 8, RngPurpose::weights);
  RngStream d(123, 7, RngPurpose::scores);
  RngStream e(124, 7, RngPurpose::weights);
  RngStream base(123, 7, RngPurpose::weights);
  bool differs_c = false, differs_d = false, differs_e = false;
  for (int i = 0; i < 16; ++i) {
    const uint32_t r = base.next_u32();
    differs_c |= c.next_u32() != r;
    differs_d |= d.next_u32() != r;
    differs_e |= e.next_u32() != r;
  }
  CHECK(differs_c);
  CHECK(differs_d);
  CHECK(differs_e);
}

TEST_CASE("signed constant init: one magnitude, sigma from fan-in") {
  // 3x3 conv with 64 input channels: fan_in = 576, sigma = sqrt(2/576)
  const double sigma = std::sqrt(2.0 / 576.0);
  CHECK(sigma == doctest::Approx(0.058925565));

  InitSpec spec{InitKind::signed_constant, 576, M_SQRT2};
  RngStream rng(42, 0, RngPurpose::weights);
  auto w = init_weights<float>(spec, {16, 64, 3, 3}, rng);
  std::set<float> magnitudes;
  int minus = 0;
  for (float v : w.data) {
    magnitudes.insert(std::fabs(v));
    if (v < 0) ++minus;
  }
  CHECK(magnitudes.size() == 1);
  CHECK(*magnitudes.begin() == doctest::Approx(sigma).epsilon(1e-6));
  // both signs occur in roughly equal amounts
  CHECK(minus > static_cast<int>(w.numel()) / 3);
  CHECK(minus < 2 * static_cast<int>(w.numel()) / 3);
}

TEST_CASE("signed constant init: sample standard deviation approaches sigma") {
  InitSpec spec{InitKind::signed_constant, 128, M_SQRT2};
  RngStream rng(7, 3, RngPurpose::weights);
  auto w = init_weights<double>(spec, {100000}, rng);
  double mean = 0.0;
  for (double v : w.data) mean += v;
  mean /= static_cast<double>(w.numel());
  double var = 0.0;
  for (double v : w.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.numel() - 1);
  CHECK(std::sqrt(var) == doctest::Approx(spec.sigma()).epsilon(0.02));
}

TEST_CASE("kaiming normal init: empirical moments") {
  InitSpec spec{InitKind::kaiming_normal, 288, M_SQRT2};
  RngStream rng(11, 0, RngPurpose::weights);
  auto w = init_weights<double>(spec, {100000}, rng);
  const double sigma = spec.sigma();
  double mean = 0.0;
  for (double v : w.data) mean += v;
  mean /= static_cast<double>(w.numel());
  double var = 0.0;
  for (double v : w.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.numel() - 1);
  CHECK(std::fabs(mean) < 3.0 * sigma / std::sqrt(1e5));
  CHECK(std::sqrt(var) == doctest::Approx(sigma).epsilon(0.02));
}

TEST_CASE("score init: kaiming uniform support and mean") {
  const int64_t fan_in = 72;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  RngStream rng(5, 9, RngPurpose::scores);
  auto s = init_scores<double>({100000}, fan_in, rng);
  double mean = 0.0;
  for (double v : s.data) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
    mean += v;
  }
  mean /= static_cast<double>(s.numel());
  const double se = bound / std::sqrt(3.0) / std::sqrt(1e5);
  CHECK(std::fabs(mean) <= 3.0 * se);
}

TEST_CASE("identical seed and position regenerate tensors bitwise") {
  InitSpec spec{InitKind::signed_constant, 27, M_SQRT2};
  RngStream r1(99, 4, RngPurpose::weights);
  RngStream r2(99, 4, RngPurpose::weights);
  auto a = init_weights<float>(spec, {8, 3, 3, 3}, r1);
  auto b = init_weights<float>(spec, {8, 3, 3, 3}, r2);
  CHECK(std::memcmp(a.ptr(), b.ptr(), sizeof(float) * a.numel()) == 0);
  CHECK(r1.draw_count() == r2.draw_count());
  CHECK(r1.draw_count() == static_cast<uint64_t>(a.numel()));  // one draw per SC element
}

TEST_CASE("init rejects zero fan-in") {
  InitSpec spec{InitKind::signed_constant, 0, M_SQRT2};
  RngStream rng(1, 0, RngPurpose::weights);
  CHECK_THROWS_AS(init_weights<float>(spec, {4}, rng), ConfigError);
}
