#include <doctest.h>

#include <cmath>
#include <random>

#include "mqs/materials.hpp"

using namespace mqs;

namespace {
const ExpLawParams kPaperExp{};  // alpha 388, beta 0.3774, gamma 2.97
}

TEST_CASE("exponential law: zero maps to zero") {
  const HVec h = exp_law_h(BVec::Zero(), kPaperExp);
  CHECK(h.x() == 0.0);
  CHECK(h.y() == 0.0);
}

TEST_CASE("exponential law at b = (1, 0) with paper parameters") {
  const HVec h = exp_law_h({1.0, 0.0}, kPaperExp);
  // Direct scalar evaluation of (alpha + beta exp(gamma)) * 1.
  const double expected = 388.0 + 0.3774 * std::exp(2.97);
  CHECK(expected == doctest::Approx(395.356).epsilon(5e-6));  // ~395.356 A/m
  CHECK(h.x() == doctest::Approx(expected).epsilon(1e-14));
  CHECK(h.y() == 0.0);
}

TEST_CASE("exponential law at b = (0.1, 0)") {
  const HVec h = exp_law_h({0.1, 0.0}, kPaperExp);
  const double expected = (388.0 + 0.3774 * std::exp(0.0297)) * 0.1;
  CHECK(h.x() == doctest::Approx(expected).epsilon(1e-14));
  CHECK(h.y() == 0.0);
}

TEST_CASE("exponential law is isotropic: rotation equivariance at 8 angles") {
  const BVec b0{0.37, -0.12};
  const HVec h0 = exp_law_h(b0, kPaperExp);
  for (int k = 0; k < 8; ++k) {
    const double th = k * 0.25 * 3.14159265358979323846 + 0.1;
    Eigen::Matrix2d rot;
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const HVec h_rot = exp_law_h(rot * b0, kPaperExp);
    CHECK((h_rot - rot * h0).norm() <= 1e-10 * h0.norm());
  }
}

TEST_CASE("exponential tangent: closed form and finite differences") {
  SUBCASE("at zero the tangent is (alpha + beta) I") {
    const Tangent2 t = exp_law_tangent(BVec::Zero(), kPaperExp);
    CHECK(t(0, 0) == doctest::Approx(388.3774).epsilon(1e-14));
    CHECK(t(1, 1) == doctest::Approx(388.3774).epsilon(1e-14));
    CHECK(t(0, 1) == 0.0);
    CHECK(t(1, 0) == 0.0);
  }

  SUBCASE("matches central finite differences of the h-map") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-1.2, 1.2);
    const double step = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
      const BVec b{dist(rng), dist(rng)};
      const Tangent2 t = exp_law_tangent(b, kPaperExp);
      for (int c = 0; c < 2; ++c) {
        BVec bp = b, bm = b;
        bp[c] += step;
        bm[c] -= step;
        const HVec fd = (exp_law_h(bp, kPaperExp) - exp_law_h(bm, kPaperExp)) / (2.0 * step);
        CHECK((t.col(c) - fd).norm() <= 1e-5 * t.norm());
      }
    }
  }

  SUBCASE("eigenvalues never fall below alpha") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(-1.5, 1.5);
    for (int trial = 0; trial < 50; ++trial) {
      const BVec b{dist(rng), dist(rng)};
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(exp_law_tangent(b, kPaperExp));
      CHECK(es.eigenvalues().minCoeff() >= kPaperExp.alpha * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("exponential law is strongly monotone") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    const BVec b1{dist(rng), dist(rng)};
    const BVec b2{dist(rng), dist(rng)};
    const double lhs = (exp_law_h(b1, kPaperExp) - exp_law_h(b2, kPaperExp)).dot(b1 - b2);
    const double rhs = kPaperExp.alpha * (b1 - b2).squaredNorm();
    CHECK(lhs >= rhs * (1.0 - 1e-12));
  }
}

TEST_CASE("exponential overflow guard") {
  // gamma |b|^2 > 700 leaves the physical range of the law.
  CHECK_THROWS_AS(exp_law_h({16.0, 0.0}, kPaperExp), MaterialError);
  CHECK_THROWS_AS(exp_law_tangent({16.0, 0.0}, kPaperExp), MaterialError);
}

TEST_CASE("conductivity map") {
  CHECK(conductivity(RegionTag::make_grain(3), 5e6) == 5e6);
  CHECK(conductivity({RegionKind::Insulation, -1}, 5e6) == 0.0);
  CHECK(conductivity({RegionKind::Air, -1}, 5e6) == 0.0);
  CHECK(conductivity({RegionKind::InductorPos, -1}, 5e6) == 0.0);
}

TEST_CASE("material map dispatch") {
  MaterialMap mm;
  mm.grain_law = MagneticLawSpec::make_exp(kPaperExp);
  mm.grain_overrides[1] = MagneticLawSpec::make_linear(123.0);
  CHECK(mm.law_for(RegionTag::make_grain(0)).kind == LawKind::Exponential);
  CHECK(mm.law_for(RegionTag::make_grain(1)).kind == LawKind::Linear);
  CHECK(mm.law_for(RegionTag::make_grain(1)).linear.nu == 123.0);
  CHECK(mm.law_for({RegionKind::Insulation, -1}).linear.nu == doctest::Approx(NU0));

  CHECK_THROWS_AS(eval_law(MagneticLawSpec::make_ja({}), BVec::Zero()), MaterialError);

  const auto [h, t] = eval_law(MagneticLawSpec::make_linear(100.0), {0.5, -0.25});
  CHECK(h.x() == doctest::Approx(50.0));
  CHECK(h.y() == doctest::Approx(-25.0));
  CHECK(t(0, 0) == 100.0);
}
