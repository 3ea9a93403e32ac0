#include <doctest.h>

#include <cmath>
#include <vector>

#include "mqs/jiles_atherton.hpp"

using namespace mqs;

namespace {

const JilesAthertonParams kPaperJA{};  // Ms 1145500, a 59, k 99, c 0.55, alpha 1.3e-4

// Drives a state along a b-waveform, committing after each step.
struct Driver {
  JAState state;
  HVec h = HVec::Zero();
  Tangent2 tangent = Tangent2::Zero();
  void step(const BVec& b) {
    const JAResult r = ja_update(b, state, kPaperJA);
    state = r.state;
    h = r.h;
    tangent = r.dh_db;
  }
};

}  // namespace

TEST_CASE("virgin state: zero input returns zero field and magnetization") {
  const JAResult r = ja_update(BVec::Zero(), JAState{}, kPaperJA);
  CHECK(r.h.norm() == 0.0);
  CHECK(r.state.M.norm() == 0.0);
}

TEST_CASE("langevin series matches the closed form near the cutover") {
  for (double x : {9.9e-5, 1.1e-4, 1e-3}) {
    const double closed = 1.0 / std::tanh(x) - 1.0 / x;
    CHECK(langevin(x) == doctest::Approx(closed).epsilon(1e-10));
    const double d_closed = 1.0 / (x * x) - 1.0 / (std::sinh(x) * std::sinh(x));
    CHECK(langevin_prime(x) == doctest::Approx(d_closed).epsilon(1e-8));
  }
}

TEST_CASE("ramp into saturation approaches Ms within 1 percent") {
  Driver d;
  const double b_max = 2.0;
  const int n = 60;
  for (int i = 1; i <= n; ++i) d.step({b_max * i / n, 0.0});
  CHECK(d.state.M.norm() >= 0.99 * kPaperJA.Ms);
  CHECK(d.state.M.norm() <= kPaperJA.Ms * (1.0 + 1e-9));
}

TEST_CASE("magnetization magnitude never exceeds Ms") {
  Driver d;
  for (int i = 1; i <= 200; ++i) {
    const double t = i * 0.05;
    d.step({1.4 * std::sin(t), 0.9 * std::sin(1.7 * t + 0.4)});
    CHECK(d.state.M.norm() <= kPaperJA.Ms * (1.0 + 1e-9));
  }
}

TEST_CASE("consistent tangent matches finite differences with frozen state") {
  Driver d;
  for (int i = 1; i <= 10; ++i) d.step({0.08 * i, 0.02 * i});
  const JAState frozen = d.state;

  const BVec b{0.9, 0.25};
  const JAResult base = ja_update(b, frozen, kPaperJA);
  const double step = 1e-5 * b.norm();
  for (int c = 0; c < 2; ++c) {
    BVec bp = b, bm = b;
    bp[c] += step;
    bm[c] -= step;
    const HVec fd =
        (ja_update(bp, frozen, kPaperJA).h - ja_update(bm, frozen, kPaperJA).h) / (2.0 * step);
    CHECK((base.dh_db.col(c) - fd).norm() <= 1e-5 * base.dh_db.norm() + 1e-12);
  }
}

TEST_CASE("virgin curve is odd before history diverges") {
  for (double bx : {0.01, 0.2, 0.7}) {
    const JAResult plus = ja_update({bx, 0.3 * bx}, JAState{}, kPaperJA);
    const JAResult minus = ja_update({-bx, -0.3 * bx}, JAState{}, kPaperJA);
    CHECK((plus.h + minus.h).norm() <= 1e-10 * plus.h.norm() + 1e-12);
  }
}

TEST_CASE("sinusoidal cycle: loop closure and non-negative dissipation") {
  Driver d;
  const int steps_per_period = 48;
  const double b_amp = 1.0;
  auto b_of = [&](int i) {
    const double phase = 2.0 * 3.14159265358979323846 * i / steps_per_period;
    return BVec{b_amp * std::sin(phase), 0.0};
  };

  // First transient period.
  std::vector<HVec> h_series;
  std::vector<BVec> b_series;
  for (int i = 1; i <= steps_per_period; ++i) d.step(b_of(i));
  const HVec h_period_start = d.h;

  // Second, settled period: record the loop.
  double dissipation = 0.0;
  double h_min = 1e300, h_max = -1e300;
  HVec h_prev = d.h;
  BVec b_prev = b_of(steps_per_period);
  for (int i = 1; i <= steps_per_period; ++i) {
    d.step(b_of(steps_per_period + i));
    // Trapezoidal circulation of h . db.
    dissipation += 0.5 * (d.h + h_prev).dot(b_of(steps_per_period + i) - b_prev);
    h_prev = d.h;
    b_prev = b_of(steps_per_period + i);
    h_min = std::min(h_min, d.h.x());
    h_max = std::max(h_max, d.h.x());
  }
  const HVec h_period_end = d.h;

  const double h_range = h_max - h_min;
  REQUIRE(h_range > 0.0);
  CHECK((h_period_end - h_period_start).norm() <= 0.01 * h_range);
  CHECK(dissipation >= 0.0);
  // A hysteretic material at 1 T swing dissipates measurably.
  CHECK(dissipation > 0.0);
}

TEST_CASE("non-finite input is rejected") {
  CHECK_THROWS_AS(ja_update({std::nan(""), 0.0}, JAState{}, kPaperJA), MaterialError);
}
