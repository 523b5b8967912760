#include "seqint/stats_util.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>

namespace seqint {

double normal_cdf(double x) {
  static const boost::math::normal_distribution<double> dist;
  return boost::math::cdf(dist, x);
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, p);
}

double normal_upper_quantile(double tail) {
  static const boost::math::normal_distribution<double> dist;
  return boost::math::quantile(boost::math::complement(dist, tail));
}

double f_distribution_sf(double x, double d1, double d2) {
  if (x <= 0.0) return 1.0;
  const boost::math::fisher_f_distribution<double> dist(d1, d2);
  return boost::math::cdf(boost::math::complement(dist, x));
}

double kolmogorov_sf(double t) {
  if (t <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * t * t);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::min(1.0, std::max(0.0, 2.0 * sum));
}

KsTest ks_test_uniform(Vec sample) {
  const auto n = static_cast<int>(sample.size());
  std::sort(sample.data(), sample.data() + n);
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = sample[i];
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
  }
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double t = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  return {d, kolmogorov_sf(t)};
}

double ks_distance(Vec a, Vec b) {
  const auto na = static_cast<int>(a.size());
  const auto nb = static_cast<int>(b.size());
  std::sort(a.data(), a.data() + na);
  std::sort(b.data(), b.data() + nb);
  int ia = 0;
  int ib = 0;
  double d = 0.0;
  while (ia < na && ib < nb) {
    const double t = std::min(a[ia], b[ib]);
    while (ia < na && a[ia] <= t) ++ia;
    while (ib < nb && b[ib] <= t) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na -
                             static_cast<double>(ib) / nb));
  }
  return d;
}

}  // namespace seqint
