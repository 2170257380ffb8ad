#include "mptp/model.hpp"

#include "mptp/errors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mptp {

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::kZero: return "zero";
    case KernelFamily::kAttract: return "attract";
    case KernelFamily::kLocalPlusAttract: return "local_plus_attract";
    case KernelFamily::kFactoredAffine: return "factored_affine";
  }
  return "unknown";
}

std::string_view to_string(LocalPotential potential) {
  switch (potential) {
    case LocalPotential::kZero: return "zero";
    case LocalPotential::kLinear: return "linear";
    case LocalPotential::kDoubleWell: return "doublewell";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "zero") return KernelFamily::kZero;
  if (name == "attract") return KernelFamily::kAttract;
  if (name == "local_plus_attract") return KernelFamily::kLocalPlusAttract;
  if (name == "factored_affine") return KernelFamily::kFactoredAffine;
  throw UnimplementedKernel("unknown kernel family '" + std::string(name) + "'");
}

LocalPotential local_potential_from_string(std::string_view name) {
  if (name == "zero") return LocalPotential::kZero;
  if (name == "linear") return LocalPotential::kLinear;
  if (name == "doublewell") return LocalPotential::kDoubleWell;
  throw InvalidArgument("unknown local potential '" + std::string(name) + "'");
}

DriftKernel::DriftKernel(KernelFamily family, KernelParams params)
    : family_(family), params_(params) {}

DriftKernel DriftKernel::attract(double kappa) {
  KernelParams p;
  p.kappa = kappa;
  return {KernelFamily::kAttract, p};
}

DriftKernel DriftKernel::local_plus_attract(LocalPotential potential, double lambda, double kappa) {
  KernelParams p;
  p.potential = potential;
  p.lambda = lambda;
  p.kappa = kappa;
  return {KernelFamily::kLocalPlusAttract, p};
}

DriftKernel DriftKernel::factored_affine(double a, double b) {
  KernelParams p;
  p.a = a;
  p.b = b;
  return {KernelFamily::kFactoredAffine, p};
}

DriftKernel DriftKernel::from_name(std::string_view family, const KernelParams& params) {
  return {kernel_family_from_string(family), params};
}

DriftKernel::Coeffs DriftKernel::coeffs(double xc) const {
  Coeffs c;
  switch (family_) {
    case KernelFamily::kZero:
      break;
    case KernelFamily::kAttract:
      c.offset = -params_.kappa * xc;
      c.offset_d1 = -params_.kappa;
      c.slope = params_.kappa;
      break;
    case KernelFamily::kLocalPlusAttract:
      switch (params_.potential) {
        case LocalPotential::kZero:
          break;
        case LocalPotential::kLinear:
          c.offset = -params_.lambda * xc;
          c.offset_d1 = -params_.lambda;
          break;
        case LocalPotential::kDoubleWell:
          c.offset = xc - xc * xc * xc;
          c.offset_d1 = 1.0 - 3.0 * xc * xc;
          c.offset_d2 = -6.0 * xc;
          break;
      }
      c.offset -= params_.kappa * xc;
      c.offset_d1 -= params_.kappa;
      c.slope = params_.kappa;
      break;
    case KernelFamily::kFactoredAffine:
      c.slope = params_.a + params_.b * xc;
      c.slope_d1 = params_.b;
      break;
  }
  return c;
}

namespace {

void require_same_dim(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() == 0) {
    throw InvalidArgument("kernel arguments must have equal nonzero dimension (got " +
                          std::to_string(x.size()) + " and " + std::to_string(y.size()) + ")");
  }
}

}  // namespace

Vector DriftKernel::eval(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  Vector out(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const Coeffs k = coeffs(x[c]);
    out[c] = k.offset + k.slope * y[c];
  }
  return out;
}

Matrix DriftKernel::jac1(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  Matrix J = Matrix::Zero(x.size(), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const Coeffs k = coeffs(x[c]);
    J(c, c) = k.offset_d1 + k.slope_d1 * y[c];
  }
  return J;
}

Matrix DriftKernel::jac2(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  Matrix J = Matrix::Zero(x.size(), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) J(c, c) = coeffs(x[c]).slope;
  return J;
}

double DriftKernel::div1(const Vector& x, const Vector& y) const {
  return jac1(x, y).trace();
}

double DriftKernel::div2(const Vector& x, const Vector& y) const {
  return jac2(x, y).trace();
}

Vector DriftKernel::grad_x_div1(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  Vector g(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const Coeffs k = coeffs(x[c]);
    g[c] = k.offset_d2 + k.slope_d2 * y[c];
  }
  return g;
}

Vector DriftKernel::grad_y_div1(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  Vector g(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) g[c] = coeffs(x[c]).slope_d1;
  return g;
}

Vector DriftKernel::grad_x_div2(const Vector& x, const Vector& y) const {
  require_same_dim(x, y);
  Vector g(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) g[c] = coeffs(x[c]).slope_d1;
  return g;
}

namespace {

void require_finite_vector(const Vector& v, const std::string& field) {
  if (!v.allFinite()) throw InvalidArgument(field + ": entries must be finite");
}

}  // namespace

void ModelSpec::validate() const {
  if (d < 1) throw InvalidArgument("model.d: must be >= 1");
  if (!(std::isfinite(sigma) && sigma > 0.0)) throw InvalidArgument("model.sigma: must be finite and > 0");
  if (!(std::isfinite(T) && T > 0.0)) throw InvalidArgument("model.T: must be finite and > 0");
  if (x0.size() != d) throw InvalidArgument("model.x0: length must equal d");
  if (xT.size() != d) throw InvalidArgument("model.xT: length must equal d");
  require_finite_vector(x0, "model.x0");
  require_finite_vector(xT, "model.xT");
  if (mu0.mean.size() != d) throw InvalidArgument("model.mu0.mean: length must equal d");
  require_finite_vector(mu0.mean, "model.mu0.mean");
  if (mu0.type == InitialLawType::kGaussian && !(std::isfinite(mu0.std) && mu0.std >= 0.0)) {
    throw InvalidArgument("model.mu0.std: must be finite and >= 0");
  }
  const KernelParams& p = kernel.params();
  for (double v : {p.kappa, p.lambda, p.a, p.b}) {
    if (!std::isfinite(v)) throw InvalidArgument("model.kernel: parameters must be finite");
  }
}

EmpiricalMeasure::EmpiricalMeasure(Matrix samples, Vector weights)
    : samples_(std::move(samples)), weights_(std::move(weights)) {
  if (samples_.rows() < 1 || samples_.cols() < 1) {
    throw InvalidArgument("empirical measure needs at least one sample of dimension >= 1");
  }
  if (weights_.size() != samples_.rows()) {
    throw InvalidArgument("empirical measure: one weight per sample required");
  }
  if ((weights_.array() < 0.0).any() || !weights_.allFinite()) {
    throw InvalidArgument("empirical measure: weights must be finite and nonnegative");
  }
  if (std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("empirical measure: weights must sum to 1");
  }
}

EmpiricalMeasure EmpiricalMeasure::uniform(Matrix samples) {
  const auto n = samples.rows();
  if (n < 1) throw InvalidArgument("empirical measure needs at least one sample");
  return {std::move(samples), Vector::Constant(n, 1.0 / static_cast<double>(n))};
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Vector& at) {
  Matrix s = at.transpose();
  return {std::move(s), Vector::Ones(1)};
}

Vector eval_kernel(const DriftKernel& kernel, const Vector& x, const Vector& y) {
  return kernel.eval(x, y);
}

Vector measure_mean(const EmpiricalMeasure& mu) {
  return (mu.weights().transpose() * mu.samples()).transpose();
}

namespace {

void require_measure_dim(const Vector& x, const EmpiricalMeasure& mu) {
  if (x.size() != mu.dim()) throw InvalidArgument("state and measure dimensions differ");
}

}  // namespace

Vector meanfield_drift(const DriftKernel& kernel, const Vector& x, const EmpiricalMeasure& mu) {
  require_measure_dim(x, mu);
  return kernel.eval(x, measure_mean(mu));
}

double meanfield_divergence(const DriftKernel& kernel, const Vector& x, const EmpiricalMeasure& mu) {
  require_measure_dim(x, mu);
  return kernel.div1(x, measure_mean(mu));
}

Vector meanfield_divergence_gradient(const DriftKernel& kernel, const Vector& x,
                                     const EmpiricalMeasure& mu) {
  require_measure_dim(x, mu);
  return kernel.grad_x_div1(x, measure_mean(mu));
}

Matrix particle_drift(const DriftKernel& kernel, const Matrix& X) {
  if (X.rows() < 1) throw InvalidArgument("particle_drift: N must be >= 1");
  const Vector mean = X.colwise().mean().transpose();
  Matrix F(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    F.row(i) = kernel.eval(X.row(i).transpose(), mean).transpose();
  }
  return F;
}

double particle_divergence(const DriftKernel& kernel, const Matrix& X) {
  if (X.rows() < 1) throw InvalidArgument("particle_divergence: N must be >= 1");
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  const Vector mean = X.colwise().mean().transpose();
  CompensatedSum total;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector xi = X.row(i).transpose();
    total.add(kernel.div1(xi, mean));
    total.add(inv_n * kernel.div2(xi, xi));
  }
  return total.value();
}

namespace {

struct Atom {
  double x;
  double w;
};

std::vector<Atom> sorted_atoms(const EmpiricalMeasure& mu) {
  std::vector<Atom> atoms(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index k = 0; k < mu.size(); ++k) atoms[k] = {mu.samples()(k, 0), mu.weights()[k]};
  std::sort(atoms.begin(), atoms.end(), [](const Atom& l, const Atom& r) { return l.x < r.x; });
  return atoms;
}

}  // namespace

double wasserstein2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != 1 || nu.dim() != 1) {
    throw UnsupportedDimension("wasserstein2_1d requires d == 1");
  }
  const auto a = sorted_atoms(mu);
  const auto b = sorted_atoms(nu);
  // Merge the breakpoints of both quantile functions; between consecutive
  // breakpoints each quantile function is constant.
  CompensatedSum cost;
  std::size_t i = 0, j = 0;
  double cum_a = a[0].w, cum_b = b[0].w, u = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next = std::min(cum_a, cum_b);
    const double diff = a[i].x - b[j].x;
    cost.add((next - u) * diff * diff);
    u = next;
    if (cum_a <= next && ++i < a.size()) cum_a += a[i].w;
    if (cum_b <= next && ++j < b.size()) cum_b += b[j].w;
  }
  return std::sqrt(std::max(cost.value(), 0.0));
}

double wasserstein2_bruteforce(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const auto n = mu.size();
  if (n != nu.size()) throw InvalidArgument("wasserstein2_bruteforce: equal sample counts required");
  if (n > 8) throw InvalidArgument("wasserstein2_bruteforce: refusing n > 8 (n! pairings)");
  if (mu.dim() != nu.dim()) throw InvalidArgument("wasserstein2_bruteforce: dimension mismatch");
  const double w = 1.0 / static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(mu.weights()[k] - w) > 1e-12 || std::abs(nu.weights()[k] - w) > 1e-12) {
      throw InvalidArgument("wasserstein2_bruteforce: equal weights required");
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      s += (mu.samples().row(k) - nu.samples().row(perm[k])).squaredNorm();
    }
    best = std::min(best, s * w);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

}  // namespace mptp
