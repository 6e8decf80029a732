#include "iac/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace iac {
namespace {

real sample_mean(const std::vector<real>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<real>(xs.size());
}

real sample_sd(const std::vector<real>& xs, real mean) {
  real ss = 0.0;
  for (real x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<real>(xs.size() - 1));
}

// Mid-ranks of |d|, plus the tie-correction term Σ(t³−t).
std::vector<real> midranks(const std::vector<real>& absd, real& tie_term) {
  const size_t m = absd.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return absd[a] < absd[b]; });
  std::vector<real> ranks(m);
  tie_term = 0.0;
  size_t i = 0;
  while (i < m) {
    size_t j = i;
    while (j + 1 < m && absd[order[j + 1]] == absd[order[i]]) ++j;
    const real avg = (static_cast<real>(i + 1) + static_cast<real>(j + 1)) / 2;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    const real t = static_cast<real>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

MeanCi mean_ci(const std::vector<real>& xs, real confidence) {
  if (xs.size() < 2)
    throw std::invalid_argument("mean_ci: need at least 2 observations");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("mean_ci: confidence outside (0,1)");
  MeanCi ci;
  ci.n = static_cast<int>(xs.size());
  ci.mean = sample_mean(xs);
  const real sd = sample_sd(xs, ci.mean);
  const boost::math::students_t dist(static_cast<real>(ci.n - 1));
  const real tq = boost::math::quantile(dist, 0.5 + confidence / 2.0);
  const real half = tq * sd / std::sqrt(static_cast<real>(ci.n));
  ci.lo = ci.mean - half;
  ci.hi = ci.mean + half;
  return ci;
}

TTestResult paired_t_test(const std::vector<real>& a,
                          const std::vector<real>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 5)
    throw std::invalid_argument("paired_t_test: need at least 5 pairs");
  std::vector<real> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const real md = sample_mean(d);
  const real sd = sample_sd(d, md);
  TTestResult r;
  r.df = static_cast<int>(d.size()) - 1;
  if (sd == 0.0) {
    r.t = md == 0.0 ? 0.0 : std::numeric_limits<real>::infinity() *
                                (md > 0 ? 1.0 : -1.0);
    r.p_two_sided = md == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = md / (sd / std::sqrt(static_cast<real>(d.size())));
  const boost::math::students_t dist(static_cast<real>(r.df));
  r.p_two_sided = 2.0 * boost::math::cdf(dist, -std::abs(r.t));
  return r;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<real>& a,
                                    const std::vector<real>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("wilcoxon: length mismatch");
  std::vector<real> d;
  for (size_t i = 0; i < a.size(); ++i) {
    const real di = a[i] - b[i];
    if (di != 0.0) d.push_back(di);  // zero differences dropped
  }
  if (d.size() < 5)
    throw std::invalid_argument(
        "wilcoxon: fewer than 5 non-zero differences (degenerate input)");
  WilcoxonResult r;
  r.n_used = static_cast<int>(d.size());
  std::vector<real> absd(d.size());
  for (size_t i = 0; i < d.size(); ++i) absd[i] = std::abs(d[i]);
  real tie_term = 0.0;
  const std::vector<real> ranks = midranks(absd, tie_term);
  for (size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0)
      r.w_plus += ranks[i];
    else
      r.w_minus += ranks[i];
  }

  const int m = r.n_used;
  if (m <= 15) {
    r.exact = true;
    const uint32_t total = 1u << m;
    const real tol = 1e-9;
    uint64_t count_ge = 0, count_le = 0;
    for (uint32_t s = 0; s < total; ++s) {
      real w = 0.0;
      for (int i = 0; i < m; ++i)
        if (s & (1u << i)) w += ranks[static_cast<size_t>(i)];
      if (w >= r.w_plus - tol) ++count_ge;
      if (w <= r.w_plus + tol) ++count_le;
    }
    r.p_one_sided = static_cast<real>(count_ge) / static_cast<real>(total);
    r.p_two_sided = std::min(
        1.0, 2.0 *
                 static_cast<real>(std::min(count_ge, count_le)) /
                 static_cast<real>(total));
    return r;
  }

  const real mu = static_cast<real>(m) * (m + 1) / 4.0;
  const real var =
      static_cast<real>(m) * (m + 1) * (2 * m + 1) / 24.0 - tie_term / 48.0;
  const real sigma = std::sqrt(var);
  const boost::math::normal norm;
  const real delta = r.w_plus - mu;
  // Continuity correction of 0.5 toward the mean.
  real zc = 0.0;
  if (std::abs(delta) > 0.5)
    zc = (delta - (delta > 0 ? 0.5 : -0.5)) / sigma;
  r.z = zc;
  r.p_two_sided =
      std::min(1.0, 2.0 * boost::math::cdf(norm, -std::abs(zc)));
  r.p_one_sided = boost::math::cdf(norm, -(delta - 0.5) / sigma);
  return r;
}

}  // namespace iac
