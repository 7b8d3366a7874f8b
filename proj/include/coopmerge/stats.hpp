#pragma once

// Unpaired Student's t-test and one-way ANOVA for comparing conditions.

#include <vector>

namespace coopmerge {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Pooled-variance two-sample t-test. Each sample needs at least two values.
/// Zero pooled variance gives t = 0, p = 1 when the means agree and
/// t = +-inf, p = 0 otherwise.
TTestResult student_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df`
/// degrees of freedom, by numerical integration of the density.
double student_t_two_sided_p(double t, double df);

struct AnovaResult {
  double F = 0.0;
  int df_between = 0;
  int df_within = 0;
  double p = 1.0;  // P(F' >= F) under the null
};

/// One-way ANOVA. Needs at least two groups, none empty, and more values than
/// groups. Zero within-group variance gives F = +inf; if the between-group
/// variance is zero as well, F is 0/0 and std::domain_error is thrown.
AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

/// Upper tail P(X >= f) of the F distribution with (d1, d2) degrees of freedom.
double f_upper_tail_p(double f, double d1, double d2);

}  // namespace coopmerge
