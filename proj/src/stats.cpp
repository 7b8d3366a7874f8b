#include "coopmerge/stats.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace coopmerge {

namespace {

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sum_sq_dev(const std::vector<double>& xs, double m) {
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s;
}

double simpson(double fa, double fm, double fb, double a, double b) { return (b - a) / 6.0 * (fa + 4.0 * fm + fb); }

double adaptive(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(fa, flm, fm, a, m);
  const double right = simpson(fm, frm, fb, m, b);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

// Adaptive Simpson with a tolerance relative to a first coarse estimate.
double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = simpson(fa, fm, fb, a, b);
  double coarse = 0.0;
  for (int i = 0; i < 16; ++i) coarse += std::abs(f(a + (b - a) * (i + 0.5) / 16.0)) * (b - a) / 16.0;
  const double tol = std::max(rel_tol * std::max(coarse, std::abs(whole)), std::numeric_limits<double>::min());
  return adaptive(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t distribution needs df > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  const double x = std::abs(t);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;

  const double log_norm = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * M_PI);
  auto pdf = [&](double u) { return std::exp(log_norm - (df + 1.0) / 2.0 * std::log1p(u * u / df)); };

  if (x <= 1.0 || df < 1.0) {
    // Body: 1 - 2 * integral over [0, x].
    return std::max(0.0, 1.0 - 2.0 * integrate(pdf, 0.0, x, 1e-13));
  }
  // Tail over [x, inf) mapped onto (0, 1] by u = x / s.
  // At s = 0 the integrand tends to 0 for df > 1 and to c * df / x for df = 1.
  const double at_zero = df > 1.0 ? 0.0 : std::exp(log_norm) * df / x;
  auto tail = [&](double s) { return s == 0.0 ? at_zero : pdf(x / s) * x / (s * s); };
  const double one_side = integrate(tail, 0.0, 1.0, 1e-13);
  return std::min(1.0, 2.0 * one_side);
}

TTestResult student_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test needs at least two values per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a);
  const double mb = mean(b);
  TTestResult r;
  r.df = na + nb - 2.0;
  const double pooled = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / r.df;
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  if (se == 0.0) {
    if (ma == mb) return {0.0, r.df, 1.0};
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = (ma - mb) / se;
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("ANOVA needs at least two groups");
  std::size_t n = 0;
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("ANOVA groups must not be empty");
    n += g.size();
    for (double x : g) total += x;
  }
  const std::size_t k = groups.size();
  if (n <= k) throw std::invalid_argument("ANOVA needs more values than groups");
  const double grand = total / static_cast<double>(n);
  double ss_between = 0.0;
  double ss_within = 0.0;
  for (const auto& g : groups) {
    const double m = mean(g);
    ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    ss_within += sum_sq_dev(g, m);
  }
  AnovaResult r;
  r.df_between = static_cast<int>(k - 1);
  r.df_within = static_cast<int>(n - k);
  const double ms_between = ss_between / r.df_between;
  const double ms_within = ss_within / r.df_within;
  if (ms_within == 0.0) {
    if (ms_between == 0.0) throw std::domain_error("ANOVA: F is 0/0, every value is identical within and across groups");
    r.F = std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.F = ms_between / ms_within;
  r.p = f_upper_tail_p(r.F, r.df_between, r.df_within);
  return r;
}

namespace {

// Continued fraction for the incomplete beta function, modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    for (int half = 0; half < 2; ++half) {
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (half == 1 && std::abs(del - 1.0) < eps) return h;
      aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    }
  }
  return h;
}

// Regularised incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace

double f_upper_tail_p(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw std::invalid_argument("F distribution needs positive degrees of freedom");
  if (std::isnan(f)) throw std::invalid_argument("F statistic is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

}  // namespace coopmerge
