#pragma once

#include <span>

#include "asil/types.hpp"

namespace asil::lorentz {

// Hyperboloid { x : <x,x>_L = 1/kappa, x0 > 0 } embedded in R^{d+1}.
// All operations take the curvature from the space, never per call.
class Space {
 public:
  explicit Space(double kappa = -1.0);

  double kappa() const { return kappa_; }
  // K = -1/kappa, so <x,x>_L = -K on the manifold.
  double radius_sq() const { return -1.0 / kappa_; }

  // Origin of the ambient R^dim, so dim = d + 1.
  Vector origin(std::size_t dim) const;

  // True when |<x,x>_L - 1/kappa| <= tol and x0 > 0.
  bool on_manifold(const Vector& x, double tol = 1e-9) const;

  // arccosh(kappa <x,y>) / sqrt(-kappa); zero for coincident points.
  double distance(const Vector& x, const Vector& y) const;

  // Squared Lorentzian distance ||x - y||_L^2 = 2/kappa - 2<x,y>_L. This is the
  // objective minimized in closed form by weighted_midpoint.
  double squared_lorentzian_distance(const Vector& x, const Vector& y) const;

  // Throws ValidationError when u is not tangent at x.
  Vector exp_map(const Vector& x, const Vector& u) const;
  Vector log_map(const Vector& x, const Vector& y) const;

  // exp_map at the origin of the tangent vector (0, v).
  Vector project_origin(const Vector& v) const;

  // Projects an ambient vector onto T_x by removing the normal component.
  Vector project_tangent(const Vector& x, const Vector& u) const;

  // mu = sum_i c_i x_i / (sqrt(-kappa) |<s,s>_L|^{1/2}) with s = sum_i c_i x_i.
  // ValidationError for all-zero or negative weights, DomainError when s is
  // not timelike.
  Vector weighted_midpoint(const Matrix& points, std::span<const double> weights) const;

  // Rescales x onto the hyperboloid along its own ray.
  Vector renormalize(const Vector& x) const;

  // Stereographic projection onto the Poincare ball of radius sqrt(K), rescaled
  // to the unit disc.
  Vector to_poincare(const Vector& x) const;

 private:
  double kappa_;
};

double minkowski_inner(const Vector& x, const Vector& y);

// Numerically stable arccosh on [1, inf): sqrt(2(a-1)) near 1, 0 below 1.
double acosh_stable(double a);

// Symmetric Lorentz boost L = [[w, v^T], [v, W]] with w = 1/sqrt(1-|b|^2),
// v = -w b, W = I + (w-1)/|b|^2 b b^T.
class LorentzBoost {
 public:
  // ValidationError when |beta| >= 1 - 1e-6.
  static LorentzBoost from_beta(const Vector& beta);
  static LorentzBoost identity(std::size_t spatial_dim);

  const Vector& beta() const { return beta_; }
  const Matrix& matrix() const { return matrix_; }
  std::size_t spatial_dim() const { return static_cast<std::size_t>(beta_.size()); }

  // DimensionError when x has the wrong length.
  Vector apply(const Vector& x) const;
  // Applies to every row of `points`.
  Matrix apply_rows(const Matrix& points) const;

 private:
  Vector beta_;
  Matrix matrix_;
};

// diag(-1, 1, ..., 1) of size dim.
Matrix minkowski_metric(std::size_t dim);

}  // namespace asil::lorentz
