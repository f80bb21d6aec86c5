#include "asil/lorentz.hpp"

#include <cmath>
#include <string>

#include "asil/errors.hpp"

namespace asil::lorentz {

namespace {

constexpr double kSeriesBand = 1e-7;

void require_same_dim(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) {
    throw DimensionError("dimension mismatch: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
  }
}

}  // namespace

double minkowski_inner(const Vector& x, const Vector& y) {
  require_same_dim(x, y);
  if (x.size() == 0) throw DimensionError("empty Lorentz vector");
  return -x[0] * y[0] + x.tail(x.size() - 1).dot(y.tail(y.size() - 1));
}

double acosh_stable(double a) {
  if (!(a > 1.0)) return 0.0;
  if (a - 1.0 <= kSeriesBand) return std::sqrt(2.0 * (a - 1.0));
  return std::acosh(a);
}

Matrix minkowski_metric(std::size_t dim) {
  Matrix eta = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  eta(0, 0) = -1.0;
  return eta;
}

Space::Space(double kappa) : kappa_(kappa) {
  if (!(kappa < 0.0) || !std::isfinite(kappa)) throw ValidationError("curvature must be negative");
}

Vector Space::origin(std::size_t dim) const {
  Vector o = Vector::Zero(static_cast<Eigen::Index>(dim));
  o[0] = std::sqrt(radius_sq());
  return o;
}

bool Space::on_manifold(const Vector& x, double tol) const {
  return x.size() > 0 && x[0] > 0.0 && std::abs(minkowski_inner(x, x) - 1.0 / kappa_) <= tol;
}

double Space::distance(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  const Vector diff = x - y;
  const double chord = std::max(0.0, minkowski_inner(diff, diff));
  return 2.0 * std::asinh(std::sqrt(-kappa_ * chord) / 2.0) / std::sqrt(-kappa_);
}

double Space::squared_lorentzian_distance(const Vector& x, const Vector& y) const {
  return 2.0 / kappa_ - 2.0 * minkowski_inner(x, y);
}

Vector Space::exp_map(const Vector& x, const Vector& u) const {
  require_same_dim(x, u);
  const double scale = 1.0 + x.norm() * u.norm();
  if (std::abs(minkowski_inner(x, u)) > 1e-9 * scale) {
    throw ValidationError("exp_map: vector is not tangent at the base point");
  }
  const double norm_sq = minkowski_inner(u, u);
  if (norm_sq <= 0.0) return x;
  const double norm = std::sqrt(norm_sq);
  const double r = std::sqrt(radius_sq());
  const double theta = norm / r;
  if (theta == 0.0) return x;
  Vector y = std::cosh(theta) * x + (r * std::sinh(theta) / norm) * u;
  return renormalize(y);
}

Vector Space::log_map(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  const double alpha = std::max(1.0, kappa_ * minkowski_inner(x, y));
  const double gap = alpha - 1.0;
  // acosh(a)/sqrt(a^2-1) -> 1 - (a-1)/3 as a -> 1.
  const double factor =
      gap < 1e-10 ? 1.0 - gap / 3.0 : std::acosh(alpha) / std::sqrt(alpha * alpha - 1.0);
  return project_tangent(x, factor * (y - alpha * x));
}

Vector Space::project_tangent(const Vector& x, const Vector& u) const {
  // <x,x> = -K, so u + (<x,u>/K) x is Minkowski-orthogonal to x.
  return u + (minkowski_inner(x, u) / radius_sq()) * x;
}

Vector Space::project_origin(const Vector& v) const {
  Vector u(v.size() + 1);
  u[0] = 0.0;
  u.tail(v.size()) = v;
  return exp_map(origin(static_cast<std::size_t>(v.size() + 1)), u);
}

Vector Space::weighted_midpoint(const Matrix& points, std::span<const double> weights) const {
  if (points.rows() != static_cast<Eigen::Index>(weights.size())) {
    throw DimensionError("weighted_midpoint: one weight per point required");
  }
  Vector sum = Vector::Zero(points.cols());
  bool any_positive = false;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double c = weights[static_cast<std::size_t>(i)];
    if (c < 0.0 || !std::isfinite(c)) throw ValidationError("weights must be nonnegative");
    if (c > 0.0) {
      any_positive = true;
      sum += c * points.row(i).transpose();
    }
  }
  if (!any_positive) throw ValidationError("weighted_midpoint: all weights are zero");
  const double q = -minkowski_inner(sum, sum);
  if (!(q > 0.0) || sum[0] <= 0.0) throw DomainError("weighted sum is not timelike");
  return sum / (std::sqrt(-kappa_) * std::sqrt(q));
}

Vector Space::renormalize(const Vector& x) const {
  const double q = -minkowski_inner(x, x);
  if (!(q > 0.0)) throw DomainError("cannot renormalize a non-timelike vector");
  Vector y = x / (std::sqrt(-kappa_) * std::sqrt(q));
  if (y[0] < 0.0) y = -y;
  return y;
}

Vector Space::to_poincare(const Vector& x) const {
  const double r = std::sqrt(radius_sq());
  const Vector unit = x / r;
  return unit.tail(unit.size() - 1) / (unit[0] + 1.0);
}

LorentzBoost LorentzBoost::identity(std::size_t spatial_dim) {
  LorentzBoost b;
  b.beta_ = Vector::Zero(static_cast<Eigen::Index>(spatial_dim));
  b.matrix_ = Matrix::Identity(static_cast<Eigen::Index>(spatial_dim + 1),
                               static_cast<Eigen::Index>(spatial_dim + 1));
  return b;
}

LorentzBoost LorentzBoost::from_beta(const Vector& beta) {
  const double norm_sq = beta.squaredNorm();
  if (!(std::sqrt(norm_sq) < 1.0 - 1e-6)) {
    throw ValidationError("boost velocity must satisfy |beta| < 1 - 1e-6");
  }
  const auto d = static_cast<std::size_t>(beta.size());
  if (norm_sq == 0.0) return identity(d);

  LorentzBoost b;
  b.beta_ = beta;
  const double w = 1.0 / std::sqrt(1.0 - norm_sq);
  // (w - 1)/|b|^2 == w^2/(w + 1); the right side has no cancellation for small |b|.
  const double coef = w * w / (w + 1.0);
  const auto n = static_cast<Eigen::Index>(d + 1);
  b.matrix_.resize(n, n);
  b.matrix_(0, 0) = w;
  b.matrix_.block(0, 1, 1, n - 1) = (-w * beta).transpose();
  b.matrix_.block(1, 0, n - 1, 1) = -w * beta;
  b.matrix_.block(1, 1, n - 1, n - 1) =
      Matrix::Identity(n - 1, n - 1) + coef * (beta * beta.transpose());
  return b;
}

Vector LorentzBoost::apply(const Vector& x) const {
  if (x.size() != matrix_.cols()) throw DimensionError("boost/point dimension mismatch");
  return matrix_ * x;
}

Matrix LorentzBoost::apply_rows(const Matrix& points) const {
  if (points.cols() != matrix_.cols()) throw DimensionError("boost/point dimension mismatch");
  return points * matrix_.transpose();
}

}  // namespace asil::lorentz
