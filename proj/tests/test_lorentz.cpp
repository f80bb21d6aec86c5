#include <doctest.h>

#include <cmath>
#include <random>

#include "asil/errors.hpp"
#include "asil/lorentz.hpp"

using namespace asil;
using namespace asil::lorentz;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x(i++) = a;
  return x;
}

Vector random_point(std::mt19937_64& rng, const Space& s, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(rng);
  return s.project_origin(v);
}

Vector random_beta(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.0, 0.95);
  Vector b(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = n(rng);
  return b.normalized() * r(rng);
}

double objective(const Space& s, const Matrix& pts, std::span<const double> w, const Vector& mu) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    total += w[static_cast<std::size_t>(i)] * s.squared_lorentzian_distance(mu, pts.row(i).transpose());
  }
  return total;
}

}  // namespace

TEST_CASE("minkowski inner product") {
  const Space s;
  const Vector o = s.origin(3);
  CHECK(minkowski_inner(o, o) == doctest::Approx(-1.0));
  CHECK(minkowski_inner(o, vec({std::sqrt(2.0), 1, 0})) == doctest::Approx(-std::sqrt(2.0)));
  std::mt19937_64 rng(1);
  const Vector x = random_point(rng, s, 3);
  const Vector y = random_point(rng, s, 3);
  CHECK(std::abs(minkowski_inner(x, y) - minkowski_inner(y, x)) <= 1e-15);
  CHECK_THROWS_AS(minkowski_inner(o, x), DimensionError);
}

TEST_CASE("distance") {
  const Space s;
  const Vector o = s.origin(3);
  const Vector p = vec({std::sqrt(2.0), 1, 0});
  CHECK(s.distance(p, p) == 0.0);
  CHECK(s.distance(o, p) == doctest::Approx(0.881373587019543).epsilon(1e-13));
  CHECK(acosh_stable(std::sqrt(2.0)) == doctest::Approx(0.881373587019543).epsilon(1e-13));
  CHECK(acosh_stable(0.5) == 0.0);
  CHECK(acosh_stable(1.0) == 0.0);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_point(rng, s, 3);
    const Vector y = random_point(rng, s, 3);
    const Vector z = random_point(rng, s, 3);
    CHECK(s.distance(x, z) <= s.distance(x, y) + s.distance(y, z) + 1e-9);
    CHECK(s.distance(x, y) == doctest::Approx(s.distance(y, x)).epsilon(1e-12));
  }
}

TEST_CASE("distance under a non-unit curvature") {
  const Space s(-4.0);
  const Vector o = s.origin(2);
  CHECK(s.on_manifold(o));
  const Vector p = s.project_origin(vec({0.7}));
  CHECK(s.on_manifold(p));
  CHECK(s.distance(o, p) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("exp and log maps") {
  const Space s;
  const Vector o = s.origin(3);
  CHECK(s.exp_map(o, Vector::Zero(3)).isApprox(o));
  CHECK(s.log_map(o, o).norm() == 0.0);
  CHECK_THROWS_AS(s.exp_map(o, vec({1, 0, 0})), ValidationError);

  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_point(rng, s, 3);
    const Vector y = random_point(rng, s, 3);
    worst = std::max(worst, (s.exp_map(x, s.log_map(x, y)) - y).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-7);
}

TEST_CASE("projection from the origin") {
  const Space s;
  CHECK(s.project_origin(Vector::Zero(2)).isApprox(s.origin(3)));
  const Vector p = s.project_origin(vec({1.0}));
  CHECK(p(0) == doctest::Approx(1.5430806348).epsilon(1e-10));
  CHECK(p(1) == doctest::Approx(1.1752011936).epsilon(1e-10));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) CHECK(s.on_manifold(random_point(rng, s, 4, 2.0)));
}

TEST_CASE("weighted midpoint") {
  const Space s;
  std::mt19937_64 rng(5);
  const Vector x = random_point(rng, s, 2);
  Matrix one(1, 3);
  one.row(0) = x.transpose();
  const double w1[] = {1.0};
  CHECK(s.weighted_midpoint(one, w1).isApprox(x, 1e-12));

  Matrix sym(2, 3);
  sym.row(0) = vec({std::sqrt(3.0), 1, 1}).transpose();
  sym.row(1) = vec({std::sqrt(3.0), -1, 1}).transpose();
  const double w2[] = {1.0, 1.0};
  const Vector mid = s.weighted_midpoint(sym, w2);
  CHECK(std::abs(mid(1)) <= 1e-12);
  CHECK(s.on_manifold(mid));

  const double zero[] = {0.0, 0.0};
  CHECK_THROWS_AS(s.weighted_midpoint(sym, zero), ValidationError);

  // Dense tangent grid around the centroid.
  Matrix pts(3, 3);
  for (int i = 0; i < 3; ++i) pts.row(i) = random_point(rng, s, 2).transpose();
  const double w[] = {0.3, 1.2, 0.7};
  const Vector mu = s.weighted_midpoint(pts, w);
  const double best = objective(s, pts, w, mu);
  const Vector e1 = s.project_tangent(mu, vec({0, 1, 0}));
  const Vector e2 = s.project_tangent(mu, vec({0, 0, 1}));
  for (int a = -10; a <= 10; ++a) {
    for (int b = -10; b <= 10; ++b) {
      const Vector q = s.exp_map(mu, e1 * (0.02 * a) + e2 * (0.02 * b));
      CHECK(best <= objective(s, pts, w, q) + 1e-12);
    }
  }
}

TEST_CASE("closed-form boosts") {
  CHECK(LorentzBoost::from_beta(Vector::Zero(3)).matrix().isIdentity());
  const LorentzBoost b = LorentzBoost::from_beta(vec({0.6}));
  Matrix expect(2, 2);
  expect << 1.25, -0.75, -0.75, 1.25;
  CHECK(b.matrix().isApprox(expect, 1e-14));
  CHECK_THROWS_AS(LorentzBoost::from_beta(vec({1.0})), ValidationError);
  CHECK_THROWS_AS(LorentzBoost::from_beta(vec({0.6, 0.8})), ValidationError);
  CHECK_THROWS_AS(b.apply(Vector::Zero(3)), DimensionError);

  const Space s;
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 4);
    const LorentzBoost l = LorentzBoost::from_beta(random_beta(rng, d));
    const Matrix eta = minkowski_metric(d + 1);
    CHECK((l.matrix().transpose() * eta * l.matrix() - eta).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(l.matrix().isApprox(l.matrix().transpose()));
    const LorentzBoost m = LorentzBoost::from_beta(random_beta(rng, d));
    const Matrix prod = l.matrix() * m.matrix();
    CHECK((prod.transpose() * eta * prod - eta).cwiseAbs().maxCoeff() <= 1e-8);

    const Vector x = random_point(rng, s, d);
    const Vector y = random_point(rng, s, d);
    CHECK(s.on_manifold(l.apply(x)));
    CHECK(std::abs(s.distance(l.apply(x), l.apply(y)) - s.distance(x, y)) <= 1e-8);
    CHECK(minkowski_inner(l.apply(x), l.apply(y)) ==
          doctest::Approx(minkowski_inner(x, y)).epsilon(1e-9));
    CHECK((l.apply(2.0 * x - 0.5 * y) - (2.0 * l.apply(x) - 0.5 * l.apply(y))).norm() <= 1e-9);
  }
  const Vector x = random_point(rng, s, 2);
  CHECK(LorentzBoost::identity(2).apply(x) == x);
}

TEST_CASE("boosts commute with weighted midpoints") {
  const Space s;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const LorentzBoost l = LorentzBoost::from_beta(random_beta(rng, 2));
    Matrix pts(4, 3);
    std::vector<double> w(4);
    for (int i = 0; i < 4; ++i) {
      pts.row(i) = random_point(rng, s, 2).transpose();
      w[static_cast<std::size_t>(i)] = u(rng);
    }
    const Vector a = l.apply(s.weighted_midpoint(pts, w));
    const Vector b = s.weighted_midpoint(l.apply_rows(pts), w);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("midpoint beats random perturbations") {
  const Space s;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Matrix pts(5, 3);
  std::vector<double> w(5);
  for (int i = 0; i < 5; ++i) {
    pts.row(i) = random_point(rng, s, 2).transpose();
    w[static_cast<std::size_t>(i)] = u(rng);
  }
  const Vector mu = s.weighted_midpoint(pts, w);
  const double best = objective(s, pts, w, mu);
  for (int i = 0; i < 1000; ++i) {
    Vector t = s.project_tangent(mu, vec({n(rng), n(rng), n(rng)}));
    t *= 1e-2 / std::sqrt(std::max(minkowski_inner(t, t), 1e-300));
    CHECK(best <= objective(s, pts, w, s.exp_map(mu, t)));
  }
}

TEST_CASE("renormalization is idempotent on manifold points") {
  const Space s;
  std::mt19937_64 rng(9);
  const Vector x = random_point(rng, s, 3);
  CHECK((s.renormalize(x) - x).cwiseAbs().maxCoeff() <= 1e-12 * x.norm());
  CHECK(s.on_manifold(s.renormalize(1.3 * x)));
}

TEST_CASE("stereographic projection") {
  const Space s;
  CHECK(s.to_poincare(s.origin(3)).norm() == 0.0);
  const Vector p = s.to_poincare(vec({std::sqrt(2.0), 1, 0}));
  CHECK(p(0) == doctest::Approx(0.414214).epsilon(1e-6));
  CHECK(p(1) == 0.0);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) CHECK(s.to_poincare(random_point(rng, s, 2, 3.0)).norm() < 1.0);
}
