#include <doctest.h>

#include <cmath>

#include "eqi/stats.hpp"

using namespace eqi;

TEST_CASE("paired t-test hand case") {
  // Differences 1.2, 0.8, 1.1, 0.9, 1.0: mean 1.0, sd 0.158114.
  std::vector<double> a = {2.2, 1.8, 2.1, 1.9, 2.0};
  std::vector<double> b = {1.0, 1.0, 1.0, 1.0, 1.0};
  TTestResult r = paired_one_tailed_ttest(a, b);
  CHECK(!r.tie);
  CHECK(r.t == doctest::Approx(14.1421356).epsilon(1e-6));
  CHECK(r.p < 1e-4);
  CHECK(r.p > 0.0);
}

TEST_CASE("identical series give the exact-tie signal") {
  std::vector<double> a = {0.3, 0.5, 0.7, 0.4};
  TTestResult r = paired_one_tailed_ttest(a, a);
  CHECK(r.tie);
  CHECK(r.direction == 0);
}

TEST_CASE("constant positive shift gives a positive tie") {
  // Dyadic values keep the +1 shift exact, so the differences are constant.
  std::vector<double> b = {0.25, 0.5, 0.75, 1.25, 2.0};
  std::vector<double> a;
  for (double v : b) a.push_back(v + 1.0);
  TTestResult r = paired_one_tailed_ttest(a, b);
  CHECK(r.tie);
  CHECK(r.direction == 1);
}

TEST_CASE("negative mean difference lands in the upper half of p") {
  std::vector<double> a = {0.1, 0.2, 0.15, 0.12, 0.18};
  std::vector<double> b = {0.5, 0.6, 0.55, 0.52, 0.58};
  TTestResult r = paired_one_tailed_ttest(a, b);
  CHECK(!r.tie);
  CHECK(r.t < 0.0);
  CHECK(r.p > 0.5);
}

TEST_CASE("t-test argument validation") {
  std::vector<double> two = {1.0, 2.0};
  std::vector<double> three = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(paired_one_tailed_ttest(two, two), SizeError);
  CHECK_THROWS_AS(paired_one_tailed_ttest(three, two), SizeError);
}

TEST_CASE("student upper tail matches reference values") {
  // Known quantiles: P(T_10 > 1.812) ~ 0.05, P(T_4 > 2.132) ~ 0.05.
  CHECK(student_t_upper_tail(1.8125, 10) == doctest::Approx(0.05).epsilon(2e-3));
  CHECK(student_t_upper_tail(2.1318, 4) == doctest::Approx(0.05).epsilon(2e-3));
  CHECK(student_t_upper_tail(0.0, 7) == doctest::Approx(0.5).epsilon(1e-9));
  // Symmetry.
  CHECK(student_t_upper_tail(-1.5, 9) ==
        doctest::Approx(1.0 - student_t_upper_tail(1.5, 9)).epsilon(1e-9));
}

TEST_CASE("incomplete beta sanity") {
  CHECK(regularized_inc_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_inc_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, 1) = x.
  CHECK(regularized_inc_beta(1.0, 1.0, 0.37) ==
        doctest::Approx(0.37).epsilon(1e-9));
  // I_x(1, b) = 1 - (1-x)^b.
  CHECK(regularized_inc_beta(1.0, 4.0, 0.2) ==
        doctest::Approx(1.0 - std::pow(0.8, 4.0)).epsilon(1e-9));
}

TEST_CASE("bonferroni multiplies and caps") {
  CHECK(bonferroni(0.01, 3) == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(bonferroni(0.5, 10) == 1.0);
}
