#include "nah/mapping_hamiltonian.hpp"

#include <cmath>
#include <numeric>

namespace nah {

SystemModel::SystemModel(ModelParameters p) : params(std::move(p)) {
  params.validate();
  band = discretize_band(params);
  band_energy_sum = std::accumulate(band.energies.begin(), band.energies.end(), 0.0);
  coupling_norm = std::sqrt(band.coupling_norm2());
}

double electron_count(const MappedState& s, double gamma) {
  double sum = 0.0;
  for (std::size_t k = 0; k < s.x.size(); ++k) sum += s.x[k] * s.x[k] + s.p[k] * s.p[k] - gamma;
  return 0.5 * sum;
}

std::vector<double> PotentialMatrix::apply_traceless(const std::vector<double>& v) const {
  const std::size_t n = diagonal.size();
  std::vector<double> out(n + 1);
  double head = (corner - shift) * v[0];
  for (std::size_t k = 0; k < n; ++k) {
    head += border[k] * v[k + 1];
    out[k + 1] = border[k] * v[0] + (diagonal[k] - shift) * v[k + 1];
  }
  out[0] = head;
  return out;
}

double PotentialMatrix::quadratic_traceless(const std::vector<double>& v) const {
  const std::size_t n = diagonal.size();
  double diag = (corner - shift) * v[0] * v[0];
  double cross = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    diag += (diagonal[k] - shift) * v[k + 1] * v[k + 1];
    cross += border[k] * v[k + 1];
  }
  return diag + 2.0 * v[0] * cross;
}

Eigen::MatrixXd PotentialMatrix::dense() const {
  const Eigen::Index n = dimension();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  m(0, 0) = corner;
  for (Eigen::Index k = 1; k < n; ++k) {
    m(k, k) = diagonal[k - 1];
    m(0, k) = m(k, 0) = border[k - 1];
  }
  return m;
}

Eigen::MatrixXd PotentialMatrix::dense_traceless() const {
  Eigen::MatrixXd m = dense();
  m.diagonal().array() -= shift;
  return m;
}

PotentialMatrix build_potential_matrix(double R, double Z, const SystemModel& model,
                                       double n_electrons) {
  const auto& p = model.params;
  PotentialMatrix pm;
  pm.corner = h_gap(R, Z, p);
  pm.diagonal = model.band.energies;
  const double g = coupling_profile(Z, p);
  const double dg = coupling_profile_derivative(Z, p);
  pm.border.resize(model.band.coupling_scale.size());
  pm.border_dZ.resize(model.band.coupling_scale.size());
  for (std::size_t k = 0; k < pm.border.size(); ++k) {
    pm.border[k] = model.band.coupling_scale[k] * g;
    pm.border_dZ[k] = model.band.coupling_scale[k] * dg;
  }
  pm.trace = pm.corner + model.band_energy_sum;
  pm.shift = pm.trace / model.dimension();
  pm.u0 = u0(R, Z, p);
  pm.u_tilde = pm.u0 + n_electrons * pm.shift;
  pm.du0 = u0_gradient(R, Z, p);
  pm.dh = h_gap_gradient(R, Z, p);
  return pm;
}

double kinetic_energy(const MappedState& s, const ModelParameters& p) {
  return 0.5 * s.P_R * s.P_R / p.masses.reduced + 0.5 * s.P_Z * s.P_Z / p.masses.total;
}

double h_sym(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p) {
  return kinetic_energy(s, p) + pm.u_tilde +
         0.5 * (pm.quadratic_traceless(s.x) + pm.quadratic_traceless(s.p));
}

double h_sym(const MappedState& s, const SystemModel& model) {
  return h_sym(s, build_potential_matrix(s.R, s.Z, model, s.n_electrons), model.params);
}

double h_map(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p,
             double gamma) {
  // x.V.x = x.V~.x + shift * |x|^2
  double norm2 = 0.0;
  for (std::size_t k = 0; k < s.x.size(); ++k) norm2 += s.x[k] * s.x[k] + s.p[k] * s.p[k];
  const double electronic = pm.quadratic_traceless(s.x) + pm.quadratic_traceless(s.p) +
                            pm.shift * norm2 - gamma * pm.trace;
  return kinetic_energy(s, p) + pm.u0 + 0.5 * electronic;
}

Derivatives forces(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p) {
  const std::size_t n = pm.diagonal.size();
  const double dim = static_cast<double>(n + 1);
  Derivatives d;
  d.dR = s.P_R / p.masses.reduced;
  d.dZ = s.P_Z / p.masses.total;

  double norm2 = 0.0;
  double cross_x = 0.0;
  double cross_p = 0.0;
  for (std::size_t k = 0; k <= n; ++k) norm2 += s.x[k] * s.x[k] + s.p[k] * s.p[k];
  for (std::size_t k = 0; k < n; ++k) {
    cross_x += pm.border_dZ[k] * s.x[k + 1];
    cross_p += pm.border_dZ[k] * s.p[k + 1];
  }
  const double n0 = s.x[0] * s.x[0] + s.p[0] * s.p[0];
  // Weight of grad h: from U~ (Ne/(N+1)) and from the traceless diagonal.
  const double level_weight = s.n_electrons / dim + 0.5 * n0 - 0.5 * norm2 / dim;
  d.dP_R = -(pm.du0.dR + level_weight * pm.dh.dR);
  d.dP_Z = -(pm.du0.dZ + level_weight * pm.dh.dZ) - (s.x[0] * cross_x + s.p[0] * cross_p);

  d.dx = pm.apply_traceless(s.p);
  d.dp = pm.apply_traceless(s.x);
  for (double& v : d.dp) v = -v;
  return d;
}

Derivatives forces(const MappedState& s, const SystemModel& model) {
  return forces(s, build_potential_matrix(s.R, s.Z, model, s.n_electrons), model.params);
}

double h_sym_dense(const MappedState& s, const PotentialMatrix& pm, const ModelParameters& p) {
  const Eigen::MatrixXd v = pm.dense_traceless();
  const Eigen::Map<const Eigen::VectorXd> x(s.x.data(), static_cast<Eigen::Index>(s.x.size()));
  const Eigen::Map<const Eigen::VectorXd> q(s.p.data(), static_cast<Eigen::Index>(s.p.size()));
  return kinetic_energy(s, p) + pm.u_tilde + 0.5 * (x.dot(v * x) + q.dot(v * q));
}

Derivatives forces_dense(const MappedState& s, const PotentialMatrix& pm,
                         const ModelParameters& p) {
  const Eigen::Index n = pm.dimension();
  const Eigen::MatrixXd v = pm.dense_traceless();
  // dV~/dR and dV~/dZ as dense matrices.
  Eigen::MatrixXd dvR = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd dvZ = Eigen::MatrixXd::Zero(n, n);
  dvR(0, 0) = pm.dh.dR;
  dvZ(0, 0) = pm.dh.dZ;
  dvR.diagonal().array() -= pm.dh.dR / static_cast<double>(n);
  dvZ.diagonal().array() -= pm.dh.dZ / static_cast<double>(n);
  for (Eigen::Index k = 1; k < n; ++k) dvZ(0, k) = dvZ(k, 0) = pm.border_dZ[k - 1];

  const Eigen::Map<const Eigen::VectorXd> x(s.x.data(), n);
  const Eigen::Map<const Eigen::VectorXd> q(s.p.data(), n);
  const double ne = s.n_electrons / static_cast<double>(n);
  Derivatives d;
  d.dR = s.P_R / p.masses.reduced;
  d.dZ = s.P_Z / p.masses.total;
  d.dP_R = -(pm.du0.dR + ne * pm.dh.dR) - 0.5 * (x.dot(dvR * x) + q.dot(dvR * q));
  d.dP_Z = -(pm.du0.dZ + ne * pm.dh.dZ) - 0.5 * (x.dot(dvZ * x) + q.dot(dvZ * q));
  const Eigen::VectorXd vx = v * q;
  const Eigen::VectorXd vp = -(v * x);
  d.dx.assign(vx.data(), vx.data() + n);
  d.dp.assign(vp.data(), vp.data() + n);
  return d;
}

}  // namespace nah
