#pragma once

// Small problem builders shared by the test suites.

#include <string>

#include "vlift/hamiltonian.hpp"
#include "vlift/problem.hpp"
#include "vlift/statespace.hpp"

namespace vlift::testing {

inline ControlProblem make_problem(int d, const std::string& f, const Matrix& g, const std::string& r,
                                   const std::string& ell, double lambda = 0.5, double lo = -1.0, double hi = 1.0) {
  ControlProblem p;
  p.controls = make_interval(lo, hi);
  p.f = make_drift(f, d);
  p.g = g;
  p.r = make_channel(r, static_cast<int>(g.cols()), p.controls);
  p.ell = make_cost(ell, p.controls);
  p.lambda = lambda;
  p.exact_argmin = closed_form_argmin(p);
  return p;
}

inline LiftedSpace single_node_space() {
  return LiftedSpace(Matrix::Constant(1, 1, -1.0), BernsteinMeasure({1.0}, {1.0}));
}

inline LiftedSpace four_node_space(double a = -1.0) {
  return LiftedSpace(Matrix::Constant(1, 1, a), BernsteinMeasure({0.2, 1.0, 3.0, 10.0}, {0.5, 1.0, 1.0, 0.5}));
}

}  // namespace vlift::testing
