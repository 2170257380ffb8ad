#include "mptp/action.hpp"

#include "empirical_system.hpp"
#include "mptp/errors.hpp"

namespace mptp {

namespace {

void check_path(const PathGrid& path, int width, const char* what) {
  if (path.values.rows() < 2) throw InvalidArgument(std::string(what) + ": path needs M >= 1");
  if (path.width() != width) {
    throw InvalidArgument(std::string(what) + ": path width " + std::to_string(path.width()) +
                          " does not match expected " + std::to_string(width));
  }
  if (!(path.T > 0.0)) throw InvalidArgument(std::string(what) + ": path horizon must be > 0");
}

}  // namespace

Matrix particle_block(const PathGrid& path, int k, int n_particles) {
  const int d = path.width() / n_particles;
  Matrix X(n_particles, d);
  for (int i = 0; i < n_particles; ++i) X.row(i) = path.values.block(k, i * d, 1, d);
  return X;
}

ActionReport om_action_meanfield(const ModelSpec& spec, const PathGrid& path) {
  check_path(path, spec.d, "om_action_meanfield");
  const double dt = path.dt();
  const double inv_var = 1.0 / (spec.sigma * spec.sigma);
  CompensatedSum kinetic, divergence;
  for (int k = 0; k < path.intervals(); ++k) {
    const Vector a = path.node(k), b = path.node(k + 1);
    const Vector m = 0.5 * (a + b);
    const Vector r = (b - a) / dt - spec.kernel.eval(m, m);
    kinetic.add(0.5 * dt * inv_var * r.squaredNorm());
    divergence.add(0.5 * dt * spec.kernel.div1(m, m));
  }
  ActionReport rep;
  rep.kinetic = kinetic.value();
  rep.divergence = divergence.value();
  rep.total = rep.kinetic + rep.divergence;
  return rep;
}

ActionReport om_action_particles(const ModelSpec& spec, int n_particles, const PathGrid& path) {
  if (n_particles < 1) throw InvalidArgument("om_action_particles: N must be >= 1");
  check_path(path, n_particles * spec.d, "om_action_particles");
  const double dt = path.dt();
  const double inv_var = 1.0 / (spec.sigma * spec.sigma);
  CompensatedSum kinetic, divergence;
  Matrix F;
  for (int k = 0; k < path.intervals(); ++k) {
    const Matrix a = particle_block(path, k, n_particles);
    const Matrix b = particle_block(path, k + 1, n_particles);
    const Matrix m = 0.5 * (a + b);
    detail::empirical_drift(spec.kernel, m, F);
    const Matrix r = (b - a) / dt - F;
    kinetic.add(0.5 * dt * inv_var * r.squaredNorm());
    divergence.add(0.5 * dt * particle_divergence(spec.kernel, m));
  }
  ActionReport rep;
  rep.kinetic = kinetic.value();
  rep.divergence = divergence.value();
  rep.total = rep.kinetic + rep.divergence;
  return rep;
}

Matrix om_gradient_meanfield(const ModelSpec& spec, const PathGrid& path) {
  check_path(path, spec.d, "om_gradient_meanfield");
  const int M = path.intervals();
  const double dt = path.dt();
  const double inv_var = 1.0 / (spec.sigma * spec.sigma);
  const auto& kernel = spec.kernel;
  Matrix grad = Matrix::Zero(M + 1, spec.d);
  for (int k = 0; k < M; ++k) {
    const Vector a = path.node(k), b = path.node(k + 1);
    const Vector m = 0.5 * (a + b);
    const Vector r = inv_var * ((b - a) / dt - kernel.eval(m, m));
    // Total derivatives along m -> (m, delta_m).
    const Matrix dF = kernel.jac1(m, m) + kernel.jac2(m, m);
    const Vector dD = kernel.grad_x_div1(m, m) + kernel.grad_y_div1(m, m);
    const Vector common = -0.5 * dt * (dF.transpose() * r) + 0.25 * dt * dD;
    grad.row(k) += (common - r).transpose();
    grad.row(k + 1) += (common + r).transpose();
  }
  return grad.middleRows(1, M - 1);
}

Matrix om_gradient_particles(const ModelSpec& spec, int n_particles, const PathGrid& path) {
  if (n_particles < 1) throw InvalidArgument("om_gradient_particles: N must be >= 1");
  check_path(path, n_particles * spec.d, "om_gradient_particles");
  const int M = path.intervals();
  const int d = spec.d;
  const double dt = path.dt();
  const double inv_n = 1.0 / n_particles;
  const double inv_var = 1.0 / (spec.sigma * spec.sigma);
  const auto& kernel = spec.kernel;

  Matrix grad = Matrix::Zero(M + 1, n_particles * d);
  Matrix F;
  for (int k = 0; k < M; ++k) {
    const Matrix a = particle_block(path, k, n_particles);
    const Matrix b = particle_block(path, k + 1, n_particles);
    const Matrix m = 0.5 * (a + b);
    detail::empirical_drift(kernel, m, F);
    const Matrix r = inv_var * ((b - a) / dt - F);
    const Eigen::RowVectorXd mean = m.colwise().mean();

    // Terms shared by all particles: sum_i J2(x^i, .)^T r_i / N and the
    // second-slot derivative of the divergence.
    Eigen::RowVectorXd shared_vjp = Eigen::RowVectorXd::Zero(d);
    Eigen::RowVectorXd shared_div = Eigen::RowVectorXd::Zero(d);
    for (int i = 0; i < n_particles; ++i) {
      for (int c = 0; c < d; ++c) {
        const auto co = kernel.coeffs(m(i, c));
        shared_vjp[c] += inv_n * co.slope * r(i, c);
        shared_div[c] += inv_n * co.slope_d1;
      }
    }
    for (int l = 0; l < n_particles; ++l) {
      for (int c = 0; c < d; ++c) {
        const auto co = kernel.coeffs(m(l, c));
        const double vjp = (co.offset_d1 + co.slope_d1 * mean[c]) * r(l, c) + shared_vjp[c];
        const double ddiv =
            co.offset_d2 + co.slope_d2 * mean[c] + shared_div[c] + inv_n * co.slope_d1;
        const double common = -0.5 * dt * vjp + 0.25 * dt * ddiv;
        const int col = l * d + c;
        grad(k, col) += common - r(l, c);
        grad(k + 1, col) += common + r(l, c);
      }
    }
  }
  return grad.middleRows(1, M - 1);
}

}  // namespace mptp
