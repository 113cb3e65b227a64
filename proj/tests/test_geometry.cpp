#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "numax/geometry.hpp"
#include "oracles.hpp"

using namespace numax;
using namespace numax::geometry;

namespace {

Matrix random_symmetric(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  Matrix m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = r; c < n; ++c) m(r, c) = m(c, r) = uni(rng);
  return m;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("eigensolver basics") {
  const Matrix id = Matrix::identity(3);
  const EigResult e = eig_sym(id);
  for (double v : e.values) CHECK(v == doctest::Approx(1.0));

  Matrix swap(2, 2);
  swap(0, 1) = swap(1, 0) = 1.0;
  const EigResult es = eig_sym(swap);
  CHECK(es.values[0] == doctest::Approx(1.0));
  CHECK(es.values[1] == doctest::Approx(-1.0));

  Matrix bad(2, 2);
  bad(0, 1) = 1.0;
  bad(1, 0) = 0.5;
  CHECK_THROWS_AS((void)eig_sym(bad), NotSymmetric);
}

TEST_CASE("eigensolver residual oracle on random matrices") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 20; ++t) {
    const Matrix m = random_symmetric(5, rng, 2.0);
    const EigResult e = eig_sym(m);
    // Reconstruction V diag(l) V^T and orthonormality V^T V = I.
    Matrix lam(5, 5);
    for (int i = 0; i < 5; ++i) lam(i, i) = e.values[i];
    const Matrix rec = multiply(multiply(e.vectors, lam), transpose(e.vectors));
    CHECK(frobenius_distance(rec, m) < 1e-9);
    const Matrix vtv = multiply(transpose(e.vectors), e.vectors);
    CHECK(frobenius_distance(vtv, Matrix::identity(5)) < 1e-9);
    // Descending order.
    for (int i = 0; i + 1 < 5; ++i) CHECK(e.values[i] >= e.values[i + 1]);
  }
}

TEST_CASE("psd projection closed forms") {
  const Matrix id = Matrix::identity(3);
  CHECK(frobenius_distance(project_psd(id), id) == 0.0);

  Matrix d(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = -1.0;
  const Matrix p = project_psd(d);
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("psd projection matches the independent QL clamp") {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 100; ++t) {
    const Matrix m = random_symmetric(4, rng, 2.0);
    const Matrix ours = project_psd(m);
    const Matrix theirs = oracle::project_psd_ql(m);
    CHECK(frobenius_distance(ours, theirs) < 1e-10);
  }
}

TEST_CASE("psd projection beats a sampled PSD cloud") {
  std::mt19937_64 rng(41);
  const Matrix m = random_symmetric(4, rng, 1.5);
  const Matrix p = project_psd(m);
  const double ours = frobenius_distance(p, m);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int t = 0; t < 100000; ++t) {
    Matrix g(4, 4);
    for (auto& v : g.data) v = uni(rng);
    const Matrix cand = multiply(g, transpose(g));  // random PSD
    CHECK(frobenius_distance(cand, m) >= ours - 1e-12);
  }
}

TEST_CASE("hypograph projection closed cases") {
  // Feasible point is a fixed point.
  const auto keep = project_hypograph(0.5, 4.0, 1, 2, 10.0);
  CHECK(keep.value == 0.5);
  CHECK(keep.rate == 4.0);

  // j = order reduces to the halfspace a <= b.
  const auto half = project_hypograph(2.0, 1.0, 2, 2, 10.0);
  CHECK(half.value == doctest::Approx(1.5));
  CHECK(half.rate == doctest::Approx(1.5));
}

TEST_CASE("hypograph projection matches the fine grid oracle") {
  // The spec's worked case: project (2, 1) onto { a <= sqrt(b) }.
  const auto p = project_hypograph(2.0, 1.0, 1, 2, 10.0);
  const auto g = oracle::hypograph_grid(2.0, 1.0, 1, 2, 10.0, 1000000);
  CHECK(std::fabs(p.value - g.value) < 1e-4);
  CHECK(std::fabs(p.rate - g.rate) < 1e-4);

  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> uni(-3.0, 13.0);
  std::uniform_int_distribution<int> jd(1, 5);
  for (int t = 0; t < 100; ++t) {
    const int order = 6;
    const int j = jd(rng);
    const double cap = 10.0;
    const double a0 = uni(rng), b0 = uni(rng);
    const auto ours = project_hypograph(a0, b0, j, order, cap);
    const auto grid = oracle::hypograph_grid(a0, b0, j, order, cap, 200000);
    const double d_ours = (ours.value - a0) * (ours.value - a0) + (ours.rate - b0) * (ours.rate - b0);
    const double d_grid = (grid.value - a0) * (grid.value - a0) + (grid.rate - b0) * (grid.rate - b0);
    CHECK(d_ours <= d_grid + 1e-4);
    // Output is feasible.
    CHECK(ours.rate >= 0.0);
    CHECK(ours.rate <= cap);
    CHECK(ours.value <= moments::fractional_power(ours.rate, j, order) + 1e-12);
  }
}

TEST_CASE("rate split projection") {
  // Feasible input stays put.
  const auto same = project_rate_split(std::vector<double>{1.0, 2.0}, 3.0, 0.0, 10.0);
  CHECK(same.x[0] == doctest::Approx(1.0));
  CHECK(same.x[1] == doctest::Approx(2.0));
  CHECK(same.rate == doctest::Approx(3.0));

  // Projection of (0, 0, 5) onto { r = x1 + x2 }: closed-form affine result
  // (5/3, 5/3, 10/3), confirmed by the grid oracle.
  const auto p = project_rate_split(std::vector<double>{0.0, 0.0}, 5.0, 0.0, 10.0);
  CHECK(p.x[0] == doctest::Approx(5.0 / 3).epsilon(1e-9));
  CHECK(p.x[1] == doctest::Approx(5.0 / 3).epsilon(1e-9));
  CHECK(p.rate == doctest::Approx(10.0 / 3).epsilon(1e-9));
  const auto g = oracle::rate_split_grid2(0.0, 0.0, 5.0, 0.0, 10.0, 6.0, 1200);
  CHECK(std::fabs(p.x[0] - g.x[0]) < 5e-3);
  CHECK(std::fabs(p.x[1] - g.x[1]) < 5e-3);
  CHECK(std::fabs(p.rate - g.rate) < 1e-2);

  // Rate below the floor gets lifted onto the hyperplane at r = xi.
  const auto lift = project_rate_split(std::vector<double>{1.0, 1.0}, 2.0, 4.0, 10.0);
  const auto gl = oracle::rate_split_grid2(1.0, 1.0, 2.0, 4.0, 10.0, 6.0, 1200);
  CHECK(std::fabs(lift.x[0] - gl.x[0]) < 5e-3);
  CHECK(std::fabs(lift.x[1] - gl.x[1]) < 5e-3);
  CHECK(lift.rate == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(lift.x[0] + lift.x[1] == doctest::Approx(lift.rate).epsilon(1e-9));
}

TEST_CASE("moment cone projection satisfies KKT") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  const auto spec = MomentConeSpec::hankel_window(0, 3, 7);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> m0(7);
    for (auto& v : m0) v = uni(rng);
    MomentConeWork work;
    const auto m = project_moment_cone(spec, m0, work, 1e-12, 2000);
    const Matrix h = spec.apply(m);
    CHECK(min_eigenvalue(h) >= -1e-9);
    // m - m0 must equal the adjoint of the PSD multiplier (KKT stationarity).
    std::vector<double> adj(7);
    spec.apply_adjoint(work.multipliers, adj);
    for (int j = 0; j < 7; ++j) CHECK(m[j] - m0[j] == doctest::Approx(adj[j]).epsilon(1e-7));
    CHECK(min_eigenvalue(work.multipliers) >= -1e-9);
    // Idempotence: projecting the output moves nothing.
    MomentConeWork w2;
    const auto m2 = project_moment_cone(spec, m, w2, 1e-12, 2000);
    for (int j = 0; j < 7; ++j) CHECK(std::fabs(m2[j] - m[j]) < 1e-8);
  }
}

TEST_CASE("source set projection keeps a lifted feasible point") {
  const auto u = fixtures::step_utility();
  const std::vector<double> caps = {10.0, 10.0};
  SourcePoint p;
  p.r = 3.0;
  p.x = {1.0, 2.0};
  p.m = moments::dirac_moments(moments::fractional_power(3.0, 1, 6), 6);
  REQUIRE(source_set_violation(p, u, caps) <= 1e-12);

  const auto rep = project_source_set(p, u, caps);
  CHECK(rep.converged);
  CHECK(rep.max_constraint_violation <= 1e-8);
  CHECK(oracle::source_point_distance(rep.result, p) < 1e-7);
}

TEST_CASE("source set projection repairs a perturbed first moment") {
  const auto u = fixtures::step_utility();
  const std::vector<double> caps = {10.0};
  SourcePoint p;
  p.r = 2.0;
  p.x = {2.0};
  p.m = moments::dirac_moments(moments::fractional_power(2.0, 1, 6), 6);
  p.m.m[0] = 0.5;  // break the normalization only

  const auto rep = project_source_set(p, u, caps);
  CHECK(rep.converged);
  CHECK(rep.max_constraint_violation < 1e-8);
  CHECK(rep.result.m.m[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("source set projection is near-optimal against sampling") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const auto u = fixtures::step_utility();
  const std::vector<double> caps = {6.0, 6.0};

  for (int inst = 0; inst < 5; ++inst) {
    SourcePoint q = oracle::sample_source_point(u, caps, rng);
    // Randomly corrupt it.
    for (auto& v : q.x) v += uni(rng) * 2.0;
    for (auto& v : q.m.m) v += uni(rng) * 0.5;
    q.r += uni(rng) * 3.0;

    const auto rep = project_source_set(q, u, caps);
    CHECK(rep.converged);
    CHECK(rep.max_constraint_violation <= 1e-8);
    const double ours = oracle::source_point_distance(rep.result, q);
    for (int t = 0; t < 10000; ++t) {
      const auto cand = oracle::sample_source_point(u, caps, rng);
      CHECK(oracle::source_point_distance(cand, q) >= ours - 1e-6);
    }
  }
}

TEST_CASE("projections are idempotent and nonexpansive") {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> uni(-4.0, 8.0);

  // Elementary: psd projection.
  for (int t = 0; t < 20; ++t) {
    const Matrix m = random_symmetric(3, rng, 2.0);
    const Matrix n = random_symmetric(3, rng, 2.0);
    const Matrix pm = project_psd(m);
    const Matrix pn = project_psd(n);
    CHECK(frobenius_distance(project_psd(pm), pm) < 1e-9);
    CHECK(frobenius_distance(pm, pn) <= frobenius_distance(m, n) + 1e-10);
  }

  // Elementary: hypograph.
  for (int t = 0; t < 50; ++t) {
    const double a0 = uni(rng), b0 = uni(rng), a1 = uni(rng), b1 = uni(rng);
    const auto p0 = project_hypograph(a0, b0, 2, 6, 10.0);
    const auto p1 = project_hypograph(a1, b1, 2, 6, 10.0);
    const auto p00 = project_hypograph(p0.value, p0.rate, 2, 6, 10.0);
    CHECK(std::hypot(p00.value - p0.value, p00.rate - p0.rate) < 1e-9);
    const double dp = std::hypot(p0.value - p1.value, p0.rate - p1.rate);
    const double dv = std::hypot(a0 - a1, b0 - b1);
    CHECK(dp <= dv + 1e-9);
  }

  // Elementary: rate split.
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x0 = {uni(rng), uni(rng)}, x1 = {uni(rng), uni(rng)};
    const double r0 = uni(rng), r1 = uni(rng);
    const auto p0 = project_rate_split(x0, r0, 1.0, 9.0);
    const auto p1 = project_rate_split(x1, r1, 1.0, 9.0);
    const auto p00 = project_rate_split(p0.x, p0.rate, 1.0, 9.0);
    double dpp = std::fabs(p00.rate - p0.rate);
    for (int i = 0; i < 2; ++i) dpp = std::max(dpp, std::fabs(p00.x[i] - p0.x[i]));
    CHECK(dpp < 1e-9);
    double dp = (p0.rate - p1.rate) * (p0.rate - p1.rate);
    double dv = (r0 - r1) * (r0 - r1);
    for (int i = 0; i < 2; ++i) {
      dp += (p0.x[i] - p1.x[i]) * (p0.x[i] - p1.x[i]);
      dv += (x0[i] - x1[i]) * (x0[i] - x1[i]);
    }
    CHECK(std::sqrt(dp) <= std::sqrt(dv) + 1e-9);
  }

  // Composite: source set projection is idempotent.
  const auto u = fixtures::step_utility();
  const std::vector<double> caps = {6.0, 6.0};
  for (int t = 0; t < 3; ++t) {
    SourcePoint q;
    q.x = {uni(rng), uni(rng)};
    q.m.m.assign(7, 0.0);
    for (auto& v : q.m.m) v = uni(rng) * 0.4;
    q.r = uni(rng);
    const auto rep = project_source_set(q, u, caps);
    REQUIRE(rep.converged);
    const auto rep2 = project_source_set(rep.result, u, caps);
    CHECK(oracle::source_point_distance(rep2.result, rep.result) < 1e-6);
  }
}

}  // TEST_SUITE
