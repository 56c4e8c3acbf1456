#include "eqi/stats.hpp"

#include <cmath>

namespace eqi {

// Continued-fraction core of the incomplete beta (modified Lentz).
static double inc_beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double regularized_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * inc_beta_cf(a, b, x) / a;
  return 1.0 - front * inc_beta_cf(b, a, 1.0 - x) / b;
}

double student_t_upper_tail(double t, double dof) {
  double x = dof / (dof + t * t);
  double tail = 0.5 * regularized_inc_beta(dof / 2.0, 0.5, x);
  return t >= 0.0 ? tail : 1.0 - tail;
}

TTestResult paired_one_tailed_ttest(std::span<const double> a,
                                    std::span<const double> b) {
  if (a.size() != b.size())
    throw SizeError("stats: paired series lengths differ");
  if (a.size() < 3) throw SizeError("stats: need at least 3 pairs");
  size_t n = a.size();
  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= (double)n;
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = (a[i] - b[i]) - mean;
    var += d * d;
  }
  var /= (double)(n - 1);
  TTestResult result;
  result.n = n;
  if (var == 0.0) {
    result.tie = true;
    result.direction = mean > 0.0 ? 1 : (mean < 0.0 ? -1 : 0);
    return result;
  }
  result.t = mean / std::sqrt(var / (double)n);
  result.p = student_t_upper_tail(result.t, (double)(n - 1));
  return result;
}

double bonferroni(double p, size_t comparisons) {
  return std::min(1.0, p * (double)comparisons);
}

}  // namespace eqi
