#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

namespace mptp {

using Vector = Eigen::VectorXd;
// Row-major so that a row (one node / one particle) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Neumaier-compensated running sum. Cell contributions to actions and norms
// go through this so results do not depend on summation order beyond ~1 ulp.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace mptp
