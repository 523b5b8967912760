#include <doctest.h>

#include <cmath>

#include "seqint/data_model.hpp"
#include "seqint/rng.hpp"

using namespace seqint;

namespace {

Dataset small_dataset() {
  Dataset d;
  d.y = Vec{{1.0, 2.0, 3.0, 4.0}};
  d.a = Vec{{0.0, 1.0, 0.0, 1.0}};
  d.x = Mat(4, 1);
  d.x << 0.5, -0.2, 1.3, 0.9;
  d.names = {"x1"};
  return d;
}

}  // namespace

TEST_CASE("validate accepts a conforming dataset and is idempotent") {
  const Dataset once = validate(small_dataset());
  const Dataset twice = validate(once);
  CHECK(once.y == twice.y);
  CHECK(once.a == twice.a);
  CHECK(once.x == twice.x);
}

TEST_CASE("validate rejects a non-binary treatment") {
  Dataset d = small_dataset();
  d.a[2] = 2.0;
  CHECK_THROWS_WITH_AS(validate(d), doctest::Contains("TreatmentNotBinary"),
                       Error);
}

TEST_CASE("validate rejects boundary propensities") {
  Dataset d = small_dataset();
  d.q0 = Vec{{0.5, 1.0, 0.5, 0.5}};
  CHECK_THROWS_WITH_AS(validate(d), doctest::Contains("PropensityOutOfRange"),
                       Error);
}

TEST_CASE("validate rejects non-finite values, duplicates, short data") {
  Dataset d = small_dataset();
  d.y[0] = std::nan("");
  CHECK_THROWS_WITH_AS(validate(d), doctest::Contains("NonFiniteValue"),
                       Error);

  Dataset dup = small_dataset();
  dup.x.conservativeResize(4, 2);
  dup.x.col(1) = dup.x.col(0);
  dup.names = {"x1", "x1"};
  CHECK_THROWS_WITH_AS(validate(dup), doctest::Contains("DuplicateName"),
                       Error);

  Dataset tiny = small_dataset();
  tiny.y.conservativeResize(3);
  tiny.a.conservativeResize(3);
  tiny.x.conservativeResize(3, 1);
  CHECK_THROWS_WITH_AS(validate(tiny), doctest::Contains("TooFewRows"),
                       Error);
}

TEST_CASE("compute_w: constant half propensity") {
  const Vec a{{1.0, 0.0, 1.0, 0.0}};
  const Vec q = Vec::Constant(4, 0.5);
  const Vec w = compute_w(a, q);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(-0.5));
  CHECK(w[2] == doctest::Approx(0.5));
  CHECK(w[3] == doctest::Approx(-0.5));
}

TEST_CASE("compute_w: elementwise propensities") {
  const Vec a{{1.0, 0.0}};
  const Vec q{{0.8, 0.2}};
  const Vec w = compute_w(a, q);
  CHECK(w[0] == doctest::Approx(0.2));
  CHECK(w[1] == doctest::Approx(-0.2));
}

TEST_CASE("compute_w rejects boundary propensity values") {
  const Vec a{{1.0}};
  const Vec q{{0.0}};
  CHECK_THROWS_AS(compute_w(a, q), Error);
}

TEST_CASE("compute_w output lives in (-1,1) minus zero") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20;
    Vec a(n), q(n);
    for (int i = 0; i < n; ++i) {
      a[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      q[i] = 0.02 + 0.96 * rng.uniform();
    }
    const Vec w = compute_w(a, q);
    for (int i = 0; i < n; ++i) {
      CHECK(w[i] > -1.0);
      CHECK(w[i] < 1.0);
      CHECK(w[i] != 0.0);
    }
  }
}

TEST_CASE("step context tracks candidates in name-sorted order") {
  Dataset d = small_dataset();
  d.x.conservativeResize(4, 3);
  d.x.col(1) = d.x.col(0) * 2.0;
  d.x.col(2) = d.x.col(0) * -1.0;
  d.names = {"zeta", "alpha", "mid"};
  const StepContext ctx = StepContext::initial(d);
  CHECK(ctx.jc_set == std::vector<int>{1, 2, 0});
  CHECK(ctx.xtilde.cols() == 1);
  CHECK(ctx.xtilde.col(0).minCoeff() == 1.0);

  const StepContext next = ctx.advanced(d, 2);
  CHECK(next.j_set == std::vector<int>{2});
  CHECK(next.jc_set == std::vector<int>{1, 0});
  CHECK(next.xtilde.cols() == 2);
  CHECK(next.xtilde.col(1) == d.x.col(2));
}
