#pragma once

#include <vector>

#include "iac/tensor.hpp"

namespace iac {

struct MeanCi {
  real mean = 0.0;
  real lo = 0.0;
  real hi = 0.0;
  int n = 0;
};

// Student-t confidence interval for the mean; n >= 2.
MeanCi mean_ci(const std::vector<real>& xs, real confidence = 0.95);

struct TTestResult {
  real t = 0.0;
  real p_two_sided = 0.0;
  int df = 0;
};

// Two-sided paired t test on a - b; requires n >= 5 matching the smallest
// cohorts reported.
TTestResult paired_t_test(const std::vector<real>& a,
                          const std::vector<real>& b);

struct WilcoxonResult {
  real w_plus = 0.0;           // sum of ranks of positive differences
  real w_minus = 0.0;
  real p_one_sided = 0.0;      // H1: a > b
  real p_two_sided = 0.0;
  bool exact = false;          // exact enumeration (n <= 15) vs normal approx
  real z = 0.0;                // only for the normal approximation
  int n_used = 0;              // after dropping zero differences
};

// Signed-rank test with mid-ranks for ties; zero differences dropped. Exact
// null enumeration of all 2^n sign patterns for n <= 15, normal
// approximation with continuity correction above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<real>& a,
                                    const std::vector<real>& b);

}  // namespace iac
