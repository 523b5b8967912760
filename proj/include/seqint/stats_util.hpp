#pragma once

#include "seqint/types.hpp"

namespace seqint {

// Standard normal CDF.
double normal_cdf(double x);

// Upper-tail quantile: returns z with P(N(0,1) > z) = tail.
double normal_upper_quantile(double tail);

// Quantile of the standard normal CDF.
double normal_quantile(double p);

// Survival function of the F(d1, d2) distribution.
double f_distribution_sf(double x, double d1, double d2);

// Two-sided Kolmogorov asymptotic survival function Q(t) = 2*sum (-1)^{j-1}
// exp(-2 j^2 t^2).
double kolmogorov_sf(double t);

// One-sample KS test of `sample` against U(0,1); returns (statistic, p).
// Uses the finite-n corrected asymptotic p-value.
struct KsTest {
  double statistic;
  double p_value;
};
KsTest ks_test_uniform(Vec sample);

// Exact sup-norm distance between the empirical CDFs of two samples.
double ks_distance(Vec a, Vec b);

}  // namespace seqint
