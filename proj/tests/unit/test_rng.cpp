#include <doctest.h>

#include <cmath>
#include <set>

#include "seqint/rng.hpp"

using namespace seqint;

TEST_CASE("identical keys give identical streams") {
  Rng a = Rng::from_key(42, {1, 2, 3});
  Rng b = Rng::from_key(42, {1, 2, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different key components give different streams") {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t step = 0; step < 50; ++step) {
    for (std::uint64_t b = 0; b < 50; ++b) {
      firsts.insert(Rng::from_key(7, {step, b}).next_u64());
    }
  }
  CHECK(firsts.size() == 2500);
}

TEST_CASE("uniform stays in [0,1) and uniform_below in range") {
  Rng rng(123);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.uniform_below(7) < 7);
  }
}

TEST_CASE("normal moments are sane") {
  Rng rng(2024);
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}
