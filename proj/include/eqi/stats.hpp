#pragma once

#include <span>

#include "eqi/common.hpp"

namespace eqi {

// One-tailed paired t-test with alternative mean(a - b) > 0. Zero variance
// of the differences yields the exact-tie signal instead of a t value.
struct TTestResult {
  bool tie = false;
  int direction = 0;  // sign of mean(a - b) when tie
  double t = 0.0;
  double p = 1.0;
  size_t n = 0;
};

TTestResult paired_one_tailed_ttest(std::span<const double> a,
                                    std::span<const double> b);

// Upper-tail p for Student's t with `dof` degrees of freedom.
double student_t_upper_tail(double t, double dof);

// Regularized incomplete beta I_x(a, b).
double regularized_inc_beta(double a, double b, double x);

double bonferroni(double p, size_t comparisons);

}  // namespace eqi
