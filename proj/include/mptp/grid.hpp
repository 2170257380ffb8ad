#pragma once

#include "mptp/types.hpp"

namespace mptp {

/// Candidate path on the uniform grid t_k = k*T/M, k = 0..M.
/// Rows are nodes; D = d for mean-field paths and N*d for particle paths
/// (particle i occupies columns [i*d, (i+1)*d)).
struct PathGrid {
  double T = 1.0;
  Matrix values;
  bool fixed_start = true;
  bool fixed_end = true;

  int intervals() const { return static_cast<int>(values.rows()) - 1; }
  int width() const { return static_cast<int>(values.cols()); }
  double dt() const { return T / intervals(); }
  double time(int k) const { return k * dt(); }
  Vector node(int k) const { return values.row(k).transpose(); }

  static PathGrid straight_line(double T, int M, const Vector& from, const Vector& to);
};

/// Deterministic control theta_t sampled on the path grid, one row per node.
struct ControlSignal {
  double T = 1.0;
  Matrix values;

  int intervals() const { return static_cast<int>(values.rows()) - 1; }
  double dt() const { return T / intervals(); }
  static ControlSignal constant(double T, int M, const Vector& value);
};

/// Adjoint trajectory on the same grid; (M+1) x d or (M+1) x (N*d).
struct CostateTrajectory {
  double T = 1.0;
  Matrix values;
};

inline PathGrid PathGrid::straight_line(double T, int M, const Vector& from, const Vector& to) {
  PathGrid p;
  p.T = T;
  p.values.resize(M + 1, from.size());
  for (int k = 0; k <= M; ++k) {
    const double s = static_cast<double>(k) / M;
    p.values.row(k) = ((1.0 - s) * from + s * to).transpose();
  }
  return p;
}

inline ControlSignal ControlSignal::constant(double T, int M, const Vector& value) {
  ControlSignal c;
  c.T = T;
  c.values = value.transpose().replicate(M + 1, 1);
  return c;
}

}  // namespace mptp
