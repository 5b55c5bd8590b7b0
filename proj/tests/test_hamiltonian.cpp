#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "vlift/hamiltonian.hpp"

using namespace vlift;
using vlift::testing::make_problem;

namespace {

const Matrix kUnitG = Matrix::Ones(1, 1);

// ℓ(u,γ) = ℓ₀(u) + γ²/2 with ℓ₀ = 2|u|²/(2 + |u|²), r = γ, U = [−1, 1].
ControlProblem test_problem() { return make_problem(1, "zero", kUnitG, "control(1)", "bounded_quadratic(2, 1)"); }

ControlProblem grid_only(ControlProblem p) {
  p.exact_argmin = nullptr;
  return p;
}

Vector vec(double a) { return Vector::Constant(1, a); }

double ell0(double u) { return 2.0 * u * u / (2.0 + u * u); }

}  // namespace

TEST(Psi, QuadraticExamples) {
  for (const auto& p : {test_problem(), grid_only(test_problem())}) {
    const Vector u = vec(0.7);
    auto e = psi(p, u, vec(0.0));
    EXPECT_NEAR(e.value, ell0(0.7), 1e-12);
    EXPECT_NEAR(e.minimizer[0], 0.0, 1e-9);
    e = psi(p, u, vec(0.5));
    EXPECT_NEAR(e.value, ell0(0.7) - 0.125, 1e-12);
    EXPECT_NEAR(e.minimizer[0], -0.5, 1e-6);
    e = psi(p, u, vec(2.0));
    EXPECT_NEAR(e.value, ell0(0.7) - 1.5, 1e-12);
    EXPECT_NEAR(e.minimizer[0], -1.0, 1e-12);
    EXPECT_NEAR(gamma_select(p, u, vec(0.5))[0], -0.5, 1e-6);
  }
}

TEST(Psi, RefinementFindsOffGridMinimum) {
  const auto p = grid_only(test_problem());
  // −z = 0.3141 lies strictly between grid points of spacing 0.02.
  const auto e = psi(p, vec(0.0), vec(-0.3141));
  EXPECT_NEAR(e.minimizer[0], 0.3141, 1e-6);
  EXPECT_GT(e.gap, 0.0);
  EXPECT_NEAR(e.value, -0.5 * 0.3141 * 0.3141, 1e-12);
}

TEST(Psi, TieBreaksToLowerBound) {
  for (const auto& p : {make_problem(1, "zero", kUnitG, "zero", "constant(1)"),
                        grid_only(make_problem(1, "zero", kUnitG, "zero", "constant(1)"))}) {
    const auto e = psi(p, vec(0.3), vec(0.8));
    EXPECT_EQ(e.minimizer[0], -1.0);
    EXPECT_EQ(e.value, 1.0);
  }
  ControlProblem two = make_problem(1, "zero", Matrix::Ones(1, 2), "zero", "zero");
  two.controls = make_interval(-1.0, 1.0);
  two.controls.lo = Vector::Constant(2, -1.0);
  two.controls.hi = Vector::Constant(2, 2.0);
  two.controls.resolution = 7;
  two.exact_argmin = nullptr;
  const auto e = psi(two, vec(0.0), Vector::Zero(2));
  EXPECT_EQ(e.minimizer, Vector::Constant(2, -1.0));
}

TEST(Psi, GridMatchesClosedFormOnRandomInputs) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (const char* cost : {"bounded_quadratic(2, 1)", "bounded_quadratic(1, 0.25, 0.5)", "bounded_quadratic(1, 0)"}) {
    const auto exact = make_problem(1, "zero", kUnitG, "control(1.5)", cost);
    ASSERT_TRUE(static_cast<bool>(exact.exact_argmin));
    const auto grid = grid_only(exact);
    for (int i = 0; i < 200; ++i) {
      const Vector u = vec(d(gen)), z = vec(d(gen));
      const auto a = psi(exact, u, z), b = psi(grid, u, z);
      EXPECT_NEAR(a.value, b.value, 1e-10) << cost;
      EXPECT_LE(a.value, b.value + 1e-14) << cost;
    }
  }
}

TEST(Psi, SelectionReproducesValueAndPropertiesHold) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  for (const auto& p : {test_problem(), grid_only(test_problem())}) {
    const double C_r = p.r.bound;
    for (int i = 0; i < 200; ++i) {
      const Vector u = vec(d(gen)), z1 = vec(d(gen)), z2 = vec(d(gen));
      const auto e1 = psi(p, u, z1), e2 = psi(p, u, z2);
      const Vector g = gamma_select(p, u, z1);
      EXPECT_EQ(hamiltonian_objective(p, u, z1, g), e1.value);
      EXPECT_GE(g[0], -1.0);
      EXPECT_LE(g[0], 1.0);
      const double mid = psi(p, u, Vector(0.5 * (z1 + z2))).value;
      EXPECT_GE(mid, 0.5 * (e1.value + e2.value) - 1e-10);
      EXPECT_LE(std::abs(e1.value - e2.value), C_r * (z1 - z2).norm() + 1e-10);
    }
  }
}

TEST(PsiConstants, Examples) {
  std::vector<Vector> us, zs;
  for (int i = -10; i <= 10; ++i) us.push_back(vec(0.5 * i));
  for (int i = -8; i <= 8; ++i) zs.push_back(vec(0.5 * i));

  const auto c = estimate_psi_constants(test_problem(), us, zs);
  EXPECT_LE(c.K, 1.0 + 1e-12);
  EXPECT_GT(c.K, 0.5);
  EXPECT_LE(c.M, 2.0);
  EXPECT_NEAR(c.M, ell0(5.0), 1e-12);
  EXPECT_TRUE(c.certified);

  const auto flat = estimate_psi_constants(make_problem(1, "zero", kUnitG, "zero", "bounded_quadratic(2, 1)"), us, zs);
  EXPECT_EQ(flat.K, 0.0);

  const auto k = estimate_psi_constants(make_problem(1, "zero", kUnitG, "zero", "constant(1)"), us, zs);
  EXPECT_EQ(k.K, 0.0);
  EXPECT_EQ(k.M, 1.0);
  EXPECT_THROW(estimate_psi_constants(test_problem(), {}, zs), InvalidArgument);
}

TEST(ClosedForm, OnlyForRegistryPairs) {
  auto p = test_problem();
  EXPECT_TRUE(static_cast<bool>(closed_form_argmin(p)));
  p.ell.name = "custom";
  EXPECT_FALSE(static_cast<bool>(closed_form_argmin(p)));
}
