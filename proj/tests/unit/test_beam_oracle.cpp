#include <cmath>
#include <numbers>
#include <random>

#include "beamkd/beam_oracle.hpp"
#include "beamkd/errors.hpp"
#include "doctest.h"

using namespace beamkd;
using namespace beamkd::beam;
constexpr double kPi = std::numbers::pi;

TEST_CASE("steering vector examples") {
  auto a = steering_vector(0.0, {4, 0.5});
  for (auto v : a) CHECK(std::abs(v - Complex(1, 0)) < 1e-15);

  auto e = steering_vector(kPi / 2, {2, 0.5});
  CHECK(std::abs(e[1] - Complex(-1, 0)) < 1e-12);

  auto s = steering_vector(kPi / 6, {3, 0.5});
  for (int n = 0; n < 3; ++n) CHECK(std::abs(s[n] - std::polar(1.0, n * kPi / 2)) < 1e-12);

  CHECK_THROWS_AS(steering_vector(kPi / 2 + 1e-6, {4, 0.5}), DomainError);
  CHECK_THROWS_AS(steering_vector(-2.0, {4, 0.5}), DomainError);
}

TEST_CASE("codebook construction") {
  auto cb = build_codebook({16, 0.5}, 64, 1.0);
  REQUIRE(cb.size() == 64);
  for (const auto& v : cb.vectors) {
    double p = 0;
    for (auto x : v) p += std::norm(x);
    CHECK(std::abs(p - 1.0) < 1e-9);
  }
  for (std::size_t c = 1; c < cb.size(); ++c) CHECK(cb.spatial_frequencies[c] > cb.spatial_frequencies[c - 1]);
  CHECK(cb.spatial_frequencies.front() >= -kPi);
  CHECK(cb.spatial_frequencies.back() < kPi);

  auto one = build_codebook({1, 0.5}, 1, 4.0);
  CHECK(std::abs(one.vectors[0][0] - Complex(2, 0)) < 1e-12);

  auto two = build_codebook({2, 0.5}, 2, 1.0);
  CHECK(two.spatial_frequencies[0] == doctest::Approx(-kPi / 2));
  CHECK(two.spatial_frequencies[1] == doctest::Approx(kPi / 2));
  const double r = 1 / std::sqrt(2.0);
  CHECK(std::abs(two.vectors[0][1] - Complex(0, -r)) < 1e-12);
  CHECK(std::abs(two.vectors[1][1] - Complex(0, r)) < 1e-12);
}

TEST_CASE("optimal beam examples") {
  auto cb = build_codebook({16, 0.5}, 64, 1.0);
  ChannelSnapshot aligned{cb.vectors[5], 1.0};
  for (auto& x : aligned.h) x *= Complex(0, 3.0);
  CHECK(optimal_beam(aligned, cb) == 5);

  // grid angle of beam 17: 2*pi*0.5*sin(theta) = omega_17
  auto grid_angle = [&](double omega) { return std::asin(omega / kPi); };
  CHECK(optimal_beam({steering_vector(grid_angle(cb.spatial_frequencies[17]), {16, 0.5}), 1.0}, cb) == 17);
  const double w = cb.spatial_frequencies[9] + 0.3 * (cb.spatial_frequencies[10] - cb.spatial_frequencies[9]);
  CHECK(optimal_beam({steering_vector(grid_angle(w), {16, 0.5}), 1.0}, cb) == 9);

  Codebook empty;
  CHECK_THROWS_AS(optimal_beam(aligned, empty), UsageError);
}

TEST_CASE("optimal beam is invariant to complex scaling") {
  auto cb = build_codebook({16, 0.5}, 64, 1.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    ChannelSnapshot ch{ComplexVector(16), 1.0};
    for (auto& x : ch.h) x = {g(rng), g(rng)};
    const int b = optimal_beam(ch, cb);
    const Complex scale(g(rng), g(rng));
    for (auto& x : ch.h) x *= scale;
    CHECK(optimal_beam(ch, cb) == b);
  }
}

TEST_CASE("snr and rate") {
  auto one = build_codebook({1, 0.5}, 1, 4.0);
  std::vector<ChannelSnapshot> ch{{{Complex(1, 0)}, 4.0}};
  auto r = snr_and_rate(ch, {0}, one);
  CHECK(r.snr_per_slot[0] == doctest::Approx(1.0));
  CHECK(r.rate == doctest::Approx(1.0));

  auto two = build_codebook({2, 0.5}, 2, 1.0);
  // h orthogonal to beam 0 is beam 1's direction
  std::vector<ChannelSnapshot> orth{{two.vectors[1], 1.0}};
  auto z = snr_and_rate(orth, {0}, two);
  CHECK(z.snr_per_slot[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(z.rate == doctest::Approx(0.0).epsilon(1e-12));

  // snr [1, 3] -> rate 3
  std::vector<ChannelSnapshot> pair{{{Complex(2, 0)}, 4.0}, {{Complex(std::sqrt(3.0), 0)}, 1.0}};
  auto one_unit = build_codebook({1, 0.5}, 1, 1.0);
  auto p = snr_and_rate(pair, {0, 0}, one_unit);
  CHECK(p.snr_per_slot[0] == doctest::Approx(1.0));
  CHECK(p.snr_per_slot[1] == doctest::Approx(3.0));
  CHECK(p.rate == doctest::Approx(3.0));
  CHECK_THROWS_AS(snr_and_rate(pair, {0}, one_unit), UsageError);
}
