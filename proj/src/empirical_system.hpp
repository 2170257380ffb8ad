#pragma once

// Vectorised fields for N particles coupled through their empirical measure.
// Rows of X / P are particles. These are the hot loops behind simulation and
// particle residuals; the public per-point API in model.hpp / pmp.hpp is the
// reference they are tested against.

#include "mptp/model.hpp"

namespace mptp::detail {

// out_i = f(x^i, mu^N) = (1/N) sum_j b(x^i, x^j)
inline void empirical_drift(const DriftKernel& kernel, const Matrix& X, Matrix& out) {
  const Eigen::Index n = X.rows(), d = X.cols();
  out.resize(n, d);
  if (kernel.family() == KernelFamily::kZero) {
    out.setZero();
    return;
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto k = kernel.coeffs(X(i, c));
      out(i, c) = k.offset + k.slope * mean[c];
    }
  }
}

// Pathwise conjugate field for each particle with theta eliminated:
//   -d_x H(x^i, mu^N, p^i) - (1/N) sum_j d_mu H(x^j, mu^N, p^j)(x^i)
// for H = (f + sigma theta).p - |theta|^2/2 - div_x f / 2.
inline void empirical_costate_field(const DriftKernel& kernel, const Matrix& X, const Matrix& P,
                                    Matrix& out) {
  const Eigen::Index n = X.rows(), d = X.cols();
  out.resize(n, d);
  if (kernel.family() == KernelFamily::kZero) {
    out.setZero();
    return;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::RowVectorXd mean = X.colwise().mean();
  Eigen::RowVectorXd measure_term = Eigen::RowVectorXd::Zero(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto k = kernel.coeffs(X(j, c));
      measure_term[c] += inv_n * (k.slope * P(j, c) - 0.5 * k.slope_d1);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto k = kernel.coeffs(X(i, c));
      const double jac = k.offset_d1 + k.slope_d1 * mean[c];
      const double div_grad = k.offset_d2 + k.slope_d2 * mean[c];
      out(i, c) = -jac * P(i, c) + 0.5 * div_grad - measure_term[c];
    }
  }
}

}  // namespace mptp::detail
