#include <gtest/gtest.h>

#include <cmath>

#include "vlift/problem.hpp"

using namespace vlift;

TEST(ParseCall, Forms) {
  auto c = parse_call("zero");
  EXPECT_EQ(c.name, "zero");
  EXPECT_TRUE(c.args.empty());
  c = parse_call(" saturating_ramp( 0.5 , 2 ) ");
  EXPECT_EQ(c.name, "saturating_ramp");
  EXPECT_EQ(c.args, (std::vector<double>{0.5, 2.0}));
  c = parse_call("constant(-1e-3)");
  EXPECT_EQ(c.args, (std::vector<double>{-1e-3}));
  EXPECT_THROW(parse_call("linear(1"), InvalidArgument);
  EXPECT_THROW(parse_call("linear(x)"), InvalidArgument);
  EXPECT_THROW(parse_call("linear(1) junk"), InvalidArgument);
}

TEST(Registry, UnknownNamesAndArity) {
  const auto U = make_interval(-1, 1);
  EXPECT_THROW(make_drift("cubic(1)", 1), InvalidArgument);
  EXPECT_THROW(make_drift("linear", 1), InvalidArgument);
  EXPECT_THROW(make_drift("saturating_ramp(1, 0)", 1), InvalidArgument);
  EXPECT_THROW(make_channel("feedback", 1, U), InvalidArgument);
  EXPECT_THROW(make_channel("control(1)", 2, U), InvalidArgument);
  EXPECT_THROW(make_cost("bounded_quadratic", U), InvalidArgument);
  EXPECT_THROW(make_cost("bounded_quadratic(-1)", U), InvalidArgument);
}

TEST(Registry, Values) {
  const auto U = make_interval(-1, 1);
  const Vector u = (Vector(2) << 0.3, -2.0).finished();
  const Vector g = Vector::Constant(1, 0.5);
  EXPECT_EQ(make_drift("zero", 2).value(u), Vector::Zero(2));
  EXPECT_EQ(make_drift("constant(1.5)", 2).value(u), Vector::Constant(2, 1.5));
  EXPECT_EQ(make_drift("linear(-2)", 2).value(u), Vector(-2.0 * u));
  const auto ramp = make_drift("saturating_ramp(0.5, 2)", 2);
  EXPECT_NEAR(ramp.value(u)[1], 2.0 * std::tanh(-0.5), 1e-15);
  // Jacobian against central differences.
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Vector e = Vector::Zero(2);
    e[i] = h;
    const Vector fd = (ramp.value(u + e) - ramp.value(u - e)) / (2 * h);
    EXPECT_LT((fd - ramp.jacobian(u).col(i)).norm(), 1e-8);
  }
  EXPECT_EQ(make_channel("control(2)", 1, U).value(u, g), Vector::Constant(1, 1.0));
  const auto ell = make_cost("bounded_quadratic(1, 2, 0.5)", U);
  const double q = std::pow(0.3 - 0.5, 2) + std::pow(-2.0 - 0.5, 2);
  EXPECT_NEAR(ell.value(u, g), q / (1 + q) + 0.25, 1e-15);
  EXPECT_NEAR(ell.bound, 1.0 + 1.0, 1e-15);
}

TEST(ControlSet, Validation) {
  EXPECT_THROW(make_interval(1, 1), InvalidArgument);
  EXPECT_THROW(make_interval(0, 1, 1), InvalidArgument);
  const auto U = make_interval(-1, 2);
  EXPECT_TRUE(U.contains(Vector::Constant(1, 2.0)));
  EXPECT_FALSE(U.contains(Vector::Constant(1, 2.1)));
  EXPECT_EQ(U.center()[0], 0.5);
  EXPECT_EQ(U.max_norm(), 2.0);
}

TEST(VerifyConstants, AcceptsRegistryAndCatchesLies) {
  ControlProblem p;
  p.controls = make_interval(-1, 1);
  p.f = make_drift("saturating_ramp(0.8, 1.5)", 2);
  p.g = Matrix::Identity(2, 1);
  p.r = make_channel("control(1)", 1, p.controls);
  p.ell = make_cost("bounded_quadratic(2, 1)", p.controls);
  const auto ok = verify_constants(p);
  EXPECT_TRUE(ok.ok) << ok.failure;
  EXPECT_LE(ok.max_lipschitz_ratio, 0.8 + 1e-12);
  p.f.lipschitz = 0.1;
  EXPECT_FALSE(verify_constants(p).ok);
  p.f = make_drift("zero", 2);
  p.ell.bound = 0.01;
  EXPECT_FALSE(verify_constants(p).ok);
}
