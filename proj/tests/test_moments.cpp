#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "numax/geometry.hpp"
#include "numax/moments.hpp"

using namespace numax;
using namespace numax::moments;

TEST_SUITE("moments") {

TEST_CASE("utility evaluation against direct summation") {
  const UtilitySpec u = fixtures::step_utility();
  CHECK(eval_utility(u, 0.0) == doctest::Approx(0.0));

  // Independent oracle: a plain loop over the printed coefficients.
  double direct = 0.0;
  for (int j = 0; j <= 6; ++j) direct += u.coefficients[j] * std::pow(1.0, j / 6.0);
  CHECK(direct == doctest::Approx(1.001).epsilon(1e-12));
  CHECK(eval_utility(u, 1.0) == doctest::Approx(direct).epsilon(1e-14));

  UtilitySpec lin;
  lin.order = 6;
  lin.coefficients = {0, 0, 0, 0, 0, 0, 1};
  lin.rate_lower = 0.0;
  lin.rate_upper = 100.0;
  lin.moment_bound = UtilitySpec::auto_moment_bound(100.0, 6);
  CHECK(eval_utility(lin, 64.0) == doctest::Approx(64.0));

  CHECK_THROWS_AS(eval_utility(u, -1.0), NegativeRate);
}

TEST_CASE("utility concave special case is midpoint concave") {
  const UtilitySpec u = fixtures::concave_sqrt_utility(4, 50.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 50.0);
  for (int t = 0; t < 200; ++t) {
    const double a = uni(rng), b = uni(rng);
    const double mid = eval_utility(u, 0.5 * (a + b));
    CHECK(mid >= 0.5 * (eval_utility(u, a) + eval_utility(u, b)) - 1e-12);
  }
}

TEST_CASE("hankel views") {
  const MomentVector m2 = dirac_moments(2.0, 2);
  const Matrix h = hankel(m2, 0, 1);
  CHECK(h(0, 0) == 1.0);
  CHECK(h(0, 1) == 2.0);
  CHECK(h(1, 0) == 2.0);
  CHECK(h(1, 1) == 4.0);

  MomentVector z;
  z.m = {1, 0, 0, 0, 0};
  const Matrix hz = hankel(z, 2, 1);
  for (double v : hz.data) CHECK(v == 0.0);

  // Anti-diagonal constancy, element by element against the definition.
  MomentVector m4;
  m4.m = {1.0, -0.3, 2.5, 0.7, 4.0};
  const Matrix h4 = hankel(m4, 0, 2);
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; b <= 2; ++b) CHECK(h4(a, b) == m4.m[a + b]);

  CHECK_THROWS_AS(hankel(m4, 2, 2), IndexOverflow);
}

TEST_CASE("dirac moments") {
  const MomentVector z = dirac_moments(0.0, 4);
  CHECK(z.m == std::vector<double>{1, 0, 0, 0, 0});
  const MomentVector ones = dirac_moments(1.0, 3);
  CHECK(ones.m == std::vector<double>{1, 1, 1, 1});
  const MomentVector two = dirac_moments(2.0, 4);
  CHECK(two.m == std::vector<double>{1, 2, 4, 8, 16});
}

TEST_CASE("moment feasibility on dirac examples") {
  CHECK(check_moment_feasible(dirac_moments(1.0, 4), 4.0, 4).feasible);

  const auto bad = check_moment_feasible(dirac_moments(3.0, 4), 4.0, 4);
  CHECK(!bad.feasible);
  CHECK(bad.witness.which == "localized");
  // For a Dirac at 3, the localized block is (beta - 9) * vv^T with
  // v = (1, 3), so its negative eigenvalue is (4 - 9) * 10 = -50.
  CHECK(bad.witness.min_eigenvalue == doctest::Approx(-50.0).epsilon(1e-9));

  MomentVector at_zero;
  at_zero.m = {1, 0, 0, 0, 0};
  CHECK(check_moment_feasible(at_zero, 1e-3, 4).feasible);

  CHECK_THROWS_AS(check_moment_feasible(dirac_moments(1.0, 3), 4.0, 3), OddOrder);
}

TEST_CASE("dirac consistency property") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ydist(-3.0, 3.0);
  std::uniform_real_distribution<double> bdist(0.1, 9.0);
  const int orders[3] = {2, 4, 6};
  int checked = 0;
  while (checked < 300) {
    const double y = ydist(rng);
    const double beta = bdist(rng);
    if (std::fabs(y * y - beta) < 1e-6) continue;  // decision boundary itself
    const int l = orders[checked % 3];
    const bool expect = y * y <= beta;
    CHECK(check_moment_feasible(dirac_moments(y, l), beta, l).feasible == expect);
    ++checked;
  }
}

TEST_CASE("mixture closure property") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const int l = (t % 2 == 0) ? 4 : 6;
    const double beta = 0.5 + 8.0 * uni(rng);
    const double ymax = std::sqrt(beta);
    MomentVector a = dirac_moments((2 * uni(rng) - 1) * ymax, l);
    MomentVector b = dirac_moments((2 * uni(rng) - 1) * ymax, l);
    const double w = uni(rng);
    MomentVector mix;
    mix.m.resize(l + 1);
    for (int j = 0; j <= l; ++j) mix.m[j] = w * a.m[j] + (1 - w) * b.m[j];
    CHECK(check_moment_feasible(mix, beta, l, 1e-9).feasible);
  }
}

TEST_CASE("utility spec validation") {
  UtilitySpec u = fixtures::step_utility();
  CHECK_NOTHROW(u.validate());
  u.moment_bound = 0.1;  // below zeta^(2/l)
  CHECK_THROWS(u.validate());
  u = fixtures::step_utility();
  u.order = 5;
  CHECK_THROWS_AS(u.validate(), OddOrder);
}

}  // TEST_SUITE
