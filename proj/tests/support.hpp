#pragma once

#include "mptp/action.hpp"
#include "mptp/model.hpp"
#include "mptp/rng.hpp"

#include <cmath>
#include <functional>

namespace mptp::testing {

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline ModelSpec model(DriftKernel kernel, double sigma = 1.0, double T = 1.0, double x0 = 0.0,
                       double xT = 1.0) {
  ModelSpec m;
  m.d = 1;
  m.sigma = sigma;
  m.T = T;
  m.kernel = std::move(kernel);
  m.x0 = vec({x0});
  m.xT = vec({xT});
  m.mu0.mean = m.x0;
  return m;
}

inline ModelSpec flat() { return model(DriftKernel::zero()); }
inline ModelSpec ou() { return model(DriftKernel::local_plus_attract(LocalPotential::kLinear, 1.0, 0.0)); }
inline ModelSpec doublewell(double kappa = 0.5) {
  return model(DriftKernel::local_plus_attract(LocalPotential::kDoubleWell, 0.0, kappa), 0.5, 5.0, -1.0, 1.0);
}
inline ModelSpec factored() { return model(DriftKernel::factored_affine(0.3, -0.8), 1.0, 1.0, 0.2, 1.0); }

// Two-dimensional variant for kernels whose components should not interact.
inline ModelSpec in_2d(ModelSpec m, const Vector& x0, const Vector& xT) {
  m.d = 2;
  m.x0 = x0;
  m.xT = xT;
  m.mu0.mean = x0;
  return m;
}

// Straight line plus a smooth random interior bump; width columns.
inline PathGrid random_path(const ModelSpec& spec, int M, int width, std::uint64_t seed, double amp = 0.3) {
  PathGrid p;
  p.T = spec.T;
  p.values.resize(M + 1, width);
  for (int c = 0; c < width; ++c) {
    const int comp = c % spec.d;
    const double a = spec.x0[comp], b = spec.xT[comp];
    for (int k = 0; k <= M; ++k) {
      const double s = static_cast<double>(k) / M;
      double v = (1.0 - s) * a + s * b;
      if (k > 0 && k < M) v += amp * rng::normal(seed, rng::Purpose::kProbe, c, k, 0);
      p.values(k, c) = v;
    }
  }
  return p;
}

// Central differences over the interior nodes.
inline Matrix fd_gradient(const std::function<double(const PathGrid&)>& f, const PathGrid& path, double h = 1e-6) {
  const int M = path.intervals();
  Matrix g(M - 1, path.width());
  PathGrid q = path;
  for (int k = 1; k < M; ++k) {
    for (int c = 0; c < path.width(); ++c) {
      const double x = path.values(k, c);
      q.values(k, c) = x + h;
      const double up = f(q);
      q.values(k, c) = x - h;
      const double dn = f(q);
      q.values(k, c) = x;
      g(k - 1, c) = (up - dn) / (2.0 * h);
    }
  }
  return g;
}

inline double relative_error(const Matrix& a, const Matrix& ref) {
  return (a - ref).norm() / std::max(ref.norm(), 1e-12);
}

inline double sinh_path(double t) { return std::sinh(t) / std::sinh(1.0); }

// Exact action of sinh(t)/sinh(1) under drift -x, sigma = 1, T = 1.
inline double ou_action() {
  const double s = std::sinh(1.0);
  return (std::exp(2.0) - 1.0) / (4.0 * s * s) - 0.5;
}

}  // namespace mptp::testing
