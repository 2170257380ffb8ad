#pragma once

#include "mptp/grid.hpp"
#include "mptp/model.hpp"

namespace mptp {

/// Discretised Onsager-Machlup action split into its two integrands.
/// Both parts already carry the 1/2 prefactor.
struct ActionReport {
  double total = 0.0;
  double kinetic = 0.0;
  double divergence = 0.0;
};

// Midpoint rule on every cell:
//   S = sum_k dt/2 [ |v_k - f(m_k, delta_{m_k})|^2 / sigma^2 + div_x f(m_k, delta_{m_k}) ]
// with v_k = (phi_{k+1} - phi_k)/dt and m_k = (phi_k + phi_{k+1})/2.
ActionReport om_action_meanfield(const ModelSpec& spec, const PathGrid& path);

// Same rule for N particles stacked as D = N*d columns; drift is the particle
// field F and the divergence is the exact trace of its Jacobian.
ActionReport om_action_particles(const ModelSpec& spec, int n_particles, const PathGrid& path);

/// Exact gradient of om_action_meanfield with respect to the interior nodes,
/// (M-1) x d; row j-1 belongs to node j. The Dirac law moves with the path, so
/// f and div f are differentiated through both kernel slots.
Matrix om_gradient_meanfield(const ModelSpec& spec, const PathGrid& path);

/// (M-1) x (N*d) gradient of om_action_particles.
Matrix om_gradient_particles(const ModelSpec& spec, int n_particles, const PathGrid& path);

// Rows of the N x d matrix stored in row k of a particle path.
Matrix particle_block(const PathGrid& path, int k, int n_particles);

}  // namespace mptp
