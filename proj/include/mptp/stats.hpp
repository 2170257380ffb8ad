#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mptp::stats {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1)
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(v / static_cast<double>(xs.size() - 1));
  }
  return out;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LineFit f;
  const double den = n * sxx - sx * sx;
  f.slope = den != 0.0 ? (n * sxy - sx * sy) / den : 0.0;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

// Fit of log(y) against log(x).
inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

// Number of consecutive increases; 0 means nonincreasing.
inline int count_increases(std::span<const double> ys, double slack = 0.0) {
  int n = 0;
  for (std::size_t i = 1; i < ys.size(); ++i) {
    if (ys[i] > ys[i - 1] + slack) ++n;
  }
  return n;
}

}  // namespace mptp::stats
