#pragma once

#include <vector>

#include <Eigen/Dense>

#include "nah/model_potential.hpp"

// Classical mapping Hamiltonian in the trace-shifted (symmetrized) form
//
//   H = P_R^2/2mu + P_Z^2/2M + U~(R,Z) + 1/2 (x.V~.x + p.V~.p)
//
// with V~ = V - tr(V)/(N+1) and U~ = U0 + Ne tr(V)/(N+1). V is an arrowhead
// matrix: diagonal {h, e_1..e_N}, first row/column V_k(Z). Products with V~
// are O(N).

namespace nah {

/// Model parameters plus their band discretization; immutable after construction.
struct SystemModel {
  explicit SystemModel(ModelParameters p);
  ModelParameters params;
  BandDiscretization band;
  double band_energy_sum = 0.0;   // sum_k e_k
  double coupling_norm = 0.0;     // sqrt(sum_k Vbar_k^2)
  [[nodiscard]] int n_states() const { return band.size(); }
  [[nodiscard]] int dimension() const { return band.size() + 1; }
};

/// Nuclear coordinates plus mapping variables; index 0 of x/p is the
/// molecular (anion) level, 1..N the metal levels.
struct MappedState {
  double R = 0.0;
  double Z = 0.0;
  double P_R = 0.0;
  double P_Z = 0.0;
  std::vector<double> x;
  std::vector<double> p;
  /// Electron count fixed when the state was sampled; enters U~ only.
  double n_electrons = 0.0;

  [[nodiscard]] int dimension() const { return static_cast<int>(x.size()); }
};

/// sum_k (x_k^2 + p_k^2 - gamma) / 2
double electron_count(const MappedState& s, double gamma);

struct PotentialMatrix {
  double corner = 0.0;             // h(R,Z)
  std::vector<double> diagonal;    // e_1..e_N
  std::vector<double> border;      // V_k(Z)
  double trace = 0.0;
  double shift = 0.0;              // trace / (N+1)
  double u0 = 0.0;
  double u_tilde = 0.0;
  Gradient du0;
  Gradient dh;
  std::vector<double> border_dZ;   // dV_k/dZ

  [[nodiscard]] int dimension() const { return static_cast<int>(diagonal.size()) + 1; }
  /// V~ * v in O(N).
  [[nodiscard]] std::vector<double> apply_traceless(const std::vector<double>& v) const;
  /// v . V~ . v in O(N).
  [[nodiscard]] double quadratic_traceless(const std::vector<double>& v) const;
  [[nodiscard]] Eigen::MatrixXd dense() const;
  [[nodiscard]] Eigen::MatrixXd dense_traceless() const;
};

PotentialMatrix build_potential_matrix(double R, double Z, const SystemModel& model,
                                       double n_electrons);

double kinetic_energy(const MappedState& s, const ModelParameters& p);

/// Symmetrized Hamiltonian; contains no zero-point parameter.
double h_sym(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p);
double h_sym(const MappedState& s, const SystemModel& model);

/// Unsymmetrized mapping Hamiltonian with zero-point parameter gamma.
double h_map(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p,
             double gamma);

/// Time derivatives of the momenta and mapping variables under h_sym.
struct Derivatives {
  double dR = 0.0;    // dR/dt
  double dZ = 0.0;    // dZ/dt
  double dP_R = 0.0;  // dP_R/dt
  double dP_Z = 0.0;  // dP_Z/dt
  std::vector<double> dx;
  std::vector<double> dp;
};

Derivatives forces(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p);
Derivatives forces(const MappedState& s, const SystemModel& model);

/// Dense-matrix reference implementations of h_sym and forces, used only to
/// cross-check the arrowhead kernels.
double h_sym_dense(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p);
Derivatives forces_dense(const MappedState& s, const PotentialMatrix& pm,
                         const ModelParameters& p);

}  // namespace nah
