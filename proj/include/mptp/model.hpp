#pragma once

#include "mptp/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mptp {

enum class KernelFamily { kZero, kAttract, kLocalPlusAttract, kFactoredAffine };

// Confining term g(x) of local_plus_attract, applied componentwise.
//   zero: 0, linear: -lambda*x, doublewell: x - x^3
enum class LocalPotential { kZero, kLinear, kDoubleWell };

std::string_view to_string(KernelFamily family);
std::string_view to_string(LocalPotential potential);
KernelFamily kernel_family_from_string(std::string_view name);
LocalPotential local_potential_from_string(std::string_view name);

struct KernelParams {
  double kappa = 0.0;   // attraction strength
  double lambda = 0.0;  // linear confinement rate
  double a = 0.0;       // factored: h(x) = a + b*x
  double b = 0.0;
  LocalPotential potential = LocalPotential::kZero;
};

/// Pairwise interaction b(x, y) drawn from a closed registry of families.
///
/// Every family is componentwise and affine in the second slot,
///   b(x, y)_c = offset(x_c) + slope(x_c) * y_c,
/// so mean-field integrals against a measure only need the measure's mean and
/// all derivatives (including the measure derivative used by the costate) are
/// available in closed form.
class DriftKernel {
 public:
  // Scalar profile of one component and its first two derivatives in x_c.
  struct Coeffs {
    double offset = 0.0, offset_d1 = 0.0, offset_d2 = 0.0;
    double slope = 0.0, slope_d1 = 0.0, slope_d2 = 0.0;
  };

  DriftKernel() = default;
  DriftKernel(KernelFamily family, KernelParams params);

  static DriftKernel zero() { return {KernelFamily::kZero, {}}; }
  static DriftKernel attract(double kappa);
  static DriftKernel local_plus_attract(LocalPotential potential, double lambda, double kappa);
  static DriftKernel factored_affine(double a, double b);
  static DriftKernel from_name(std::string_view family, const KernelParams& params);

  KernelFamily family() const { return family_; }
  const KernelParams& params() const { return params_; }

  Coeffs coeffs(double xc) const;

  Vector eval(const Vector& x, const Vector& y) const;
  Matrix jac1(const Vector& x, const Vector& y) const;  // d b / d x
  Matrix jac2(const Vector& x, const Vector& y) const;  // d b / d y
  double div1(const Vector& x, const Vector& y) const;
  double div2(const Vector& x, const Vector& y) const;
  // Gradients of the slot divergences, needed by costates and action gradients.
  Vector grad_x_div1(const Vector& x, const Vector& y) const;
  Vector grad_y_div1(const Vector& x, const Vector& y) const;
  Vector grad_x_div2(const Vector& x, const Vector& y) const;

 private:
  KernelFamily family_ = KernelFamily::kZero;
  KernelParams params_{};
};

enum class InitialLawType { kDirac, kGaussian };

struct InitialLaw {
  InitialLawType type = InitialLawType::kDirac;
  Vector mean;
  double std = 0.0;
};

struct ModelSpec {
  int d = 1;
  double sigma = 1.0;
  DriftKernel kernel;
  double T = 1.0;
  Vector x0;
  Vector xT;
  InitialLaw mu0;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Weighted sample cloud; rows of `samples` are points in R^d.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(Matrix samples, Vector weights);
  static EmpiricalMeasure uniform(Matrix samples);
  static EmpiricalMeasure dirac(const Vector& at);

  const Matrix& samples() const { return samples_; }
  const Vector& weights() const { return weights_; }
  Eigen::Index size() const { return samples_.rows(); }
  int dim() const { return static_cast<int>(samples_.cols()); }

 private:
  Matrix samples_;
  Vector weights_;
};

Vector eval_kernel(const DriftKernel& kernel, const Vector& x, const Vector& y);
Vector measure_mean(const EmpiricalMeasure& mu);

// f(x, mu) = sum_k w_k b(x, y_k), evaluated through b(x, mean(mu)).
Vector meanfield_drift(const DriftKernel& kernel, const Vector& x, const EmpiricalMeasure& mu);
// div_x f(x, mu)
double meanfield_divergence(const DriftKernel& kernel, const Vector& x, const EmpiricalMeasure& mu);
// grad_x div_x f(x, mu)
Vector meanfield_divergence_gradient(const DriftKernel& kernel, const Vector& x,
                                     const EmpiricalMeasure& mu);

// Row i: (1/N) sum_j b(x^i, x^j), self-term included.
Matrix particle_drift(const DriftKernel& kernel, const Matrix& X);
// Exact trace of the Jacobian of the flattened particle field.
double particle_divergence(const DriftKernel& kernel, const Matrix& X);

// Exact 1-D W2 through the quantile coupling. Arbitrary weights and sizes.
double wasserstein2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
// Exhaustive search over pairings; equal counts n <= 8, equal weights, any d.
double wasserstein2_bruteforce(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

}  // namespace mptp
