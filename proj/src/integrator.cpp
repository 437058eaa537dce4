#include "nah/integrator.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "nah/units.hpp"

namespace nah {

namespace {

bool finite(const MappedState& s) {
  if (!std::isfinite(s.R) || !std::isfinite(s.Z) || !std::isfinite(s.P_R) ||
      !std::isfinite(s.P_Z))
    return false;
  for (std::size_t k = 0; k < s.x.size(); ++k)
    if (!std::isfinite(s.x[k]) || !std::isfinite(s.p[k])) return false;
  return true;
}

inline void rotate(double& x, double& p, double c, double s) {
  const double xn = x * c + p * s;
  p = p * c - x * s;
  x = xn;
}

// Exact flow of the diagonal part of H for time tau (nuclei fixed). With
// `kick`, the nuclear momenta receive the (constant) diagonal force.
// cos_e/sin_e hold cos/sin(e_k tau).
void level_flow(const SystemModel& model, MappedState& s, double tau, const double* cos_e,
                const double* sin_e, bool kick) {
  const auto& p = model.params;
  const std::size_t n = model.band.energies.size();
  const double dim = static_cast<double>(n + 1);
  const double h = h_gap(s.R, s.Z, p);
  const double shift = (h + model.band_energy_sum) / dim;
  if (kick) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k <= n; ++k) norm2 += s.x[k] * s.x[k] + s.p[k] * s.p[k];
    const double n0 = s.x[0] * s.x[0] + s.p[0] * s.p[0];
    const double w = s.n_electrons / dim + 0.5 * n0 - 0.5 * norm2 / dim;
    const Gradient du = u0_gradient(s.R, s.Z, p);
    const Gradient dh = h_gap_gradient(s.R, s.Z, p);
    s.P_R -= (du.dR + w * dh.dR) * tau;
    s.P_Z -= (du.dZ + w * dh.dZ) * tau;
  }
  rotate(s.x[0], s.p[0], std::cos((h - shift) * tau), std::sin((h - shift) * tau));
  const double cg = std::cos(shift * tau);
  const double sg = -std::sin(shift * tau);
  double* x = s.x.data() + 1;
  double* q = s.p.data() + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double c = cos_e[k] * cg - sin_e[k] * sg;
    const double sn = sin_e[k] * cg + cos_e[k] * sg;
    const double xn = x[k] * c + q[k] * sn;
    q[k] = q[k] * c - x[k] * sn;
    x[k] = xn;
  }
}

// Exact flow of the coupling border for time tau. The border is the rank-2
// matrix v e0^T + e0 v^T whose square is |v|^2 times a projector, so its
// exponential has a closed form. Nuclear kick uses the conserved x0(Vbar.x)+p0(Vbar.p).
void coupling_flow(const SystemModel& model, MappedState& s, double tau, bool kick) {
  if (model.coupling_norm == 0.0) return;
  const auto& p = model.params;
  const std::size_t n = model.band.energies.size();
  const double* vbar = model.band.coupling_scale.data();
  const double* x = s.x.data() + 1;
  const double* q = s.p.data() + 1;
  double vx = 0.0;
  double vp = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    vx += vbar[k] * x[k];
    vp += vbar[k] * q[k];
  }
  const double x0 = s.x[0];
  const double p0 = s.p[0];
  if (kick) s.P_Z -= coupling_profile_derivative(s.Z, p) * (x0 * vx + p0 * vp) * tau;

  const double norm = model.coupling_norm;
  const double theta = coupling_profile(s.Z, p) * norm * tau;
  const double c = std::cos(theta);
  const double a = (c - 1.0) / (norm * norm);
  const double b = std::sin(theta) / norm;
  s.x[0] = c * x0 + b * vp;
  s.p[0] = c * p0 - b * vx;
  const double fx = a * vx + b * p0;
  const double fp = a * vp - b * x0;
  double* xm = s.x.data() + 1;
  double* qm = s.p.data() + 1;
  for (std::size_t k = 0; k < n; ++k) {
    xm[k] += vbar[k] * fx;
    qm[k] += vbar[k] * fp;
  }
}

void fill_tables(const std::vector<double>& e, double tau, std::vector<double>& c,
                 std::vector<double>& s) {
  c.resize(e.size());
  s.resize(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    c[k] = std::cos(e[k] * tau);
    s[k] = std::sin(e[k] * tau);
  }
}

double linear_slope(const std::deque<std::pair<double, double>>& pts) {
  const double n = static_cast<double>(pts.size());
  double st = 0.0, sy = 0.0;
  for (const auto& [t, y] : pts) {
    st += t;
    sy += y;
  }
  const double mt = st / n;
  const double my = sy / n;
  double num = 0.0, den = 0.0;
  for (const auto& [t, y] : pts) {
    num += (t - mt) * (y - my);
    den += (t - mt) * (t - mt);
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(dt > 0.0)) throw Error("integrator: dt must be > 0");
  if (!(t_max > 0.0)) throw Error("integrator: t_max must be > 0");
  if (!(energy_tol > 0.0)) throw Error("integrator: energy_tol must be > 0");
  if (!(R_min < R_max)) throw Error("integrator: R_min must be < R_max");
  if (electronic_substeps < 1) throw Error("integrator: electronic_substeps must be >= 1");
  if (!(record_stride > 0.0)) throw Error("integrator: record_stride must be > 0");
}

long IntegratorConfig::n_steps() const { return std::lround(t_max / dt); }

long IntegratorConfig::record_every() const {
  return std::max(1L, std::lround(record_stride / dt));
}

long IntegratorConfig::n_records() const { return n_steps() / record_every() + 1; }

IntegratorConfig default_integrator_config() {
  IntegratorConfig c;
  c.dt = units::fs(1.5e-2);
  c.t_max = units::fs(500.0);
  c.record_stride = units::fs(0.5);
  c.Z_detect = units::angstrom(5.0);
  c.plateau_window = units::fs(20.0);
  c.plateau_slope = 1e-4 / units::fs(1.0);
  return c;
}

Propagator::Propagator(const SystemModel& model, const IntegratorConfig& cfg)
    : model_(model), cfg_(cfg) {
  cfg_.validate();
  const double tau = cfg_.dt / (2.0 * cfg_.electronic_substeps);
  fill_tables(model_.band.energies, tau, cos_fwd_, sin_fwd_);
  sin_bwd_ = sin_fwd_;
  for (double& v : sin_bwd_) v = -v;
}

void Propagator::drift(MappedState& s, double tau) const {
  s.R += s.P_R / model_.params.masses.reduced * tau;
  s.Z += s.P_Z / model_.params.masses.total * tau;
}

void Propagator::split_step(MappedState& s, double dt) const {
  const int m = cfg_.electronic_substeps;
  const double tau = dt / (2.0 * m);
  const double* sin_e = dt > 0.0 ? sin_fwd_.data() : sin_bwd_.data();
  auto half = [&] {
    for (int i = 0; i < m; ++i) {
      coupling_flow(model_, s, 0.5 * tau, true);
      level_flow(model_, s, tau, cos_fwd_.data(), sin_e, true);
      coupling_flow(model_, s, 0.5 * tau, true);
    }
  };
  half();
  drift(s, dt);
  half();
}

void Propagator::exact_step(MappedState& s, double dt) const {
  auto kick = [&](double tau) {
    const auto d = forces(s, model_);
    s.P_R += d.dP_R * tau;
    s.P_Z += d.dP_Z * tau;
  };
  kick(0.5 * dt);
  propagate_electronic(s, model_, 0.5 * dt, true);
  drift(s, dt);
  propagate_electronic(s, model_, 0.5 * dt, true);
  kick(0.5 * dt);
}

void Propagator::step(MappedState& s, bool backward) const {
  const MappedState before = s;
  const double dt = backward ? -cfg_.dt : cfg_.dt;
  if (cfg_.scheme == ElectronicScheme::split)
    split_step(s, dt);
  else
    exact_step(s, dt);
  if (!finite(s)) throw NonFiniteStateError("non-finite state after integration step", before);
}

void Propagator::step_decoupled(MappedState& s, double& level_phase, double& shift_phase) const {
  const auto& p = model_.params;
  const std::size_t n = model_.band.energies.size();
  const double dim = static_cast<double>(n + 1);
  double norm2 = 0.0;
  for (std::size_t k = 0; k <= n; ++k) norm2 += s.x[k] * s.x[k] + s.p[k] * s.p[k];
  const double n0 = s.x[0] * s.x[0] + s.p[0] * s.p[0];
  const double w = s.n_electrons / dim + 0.5 * n0 - 0.5 * norm2 / dim;
  const double half = 0.5 * cfg_.dt;
  auto kick = [&] {
    const Gradient du = u0_gradient(s.R, s.Z, p);
    const Gradient dh = h_gap_gradient(s.R, s.Z, p);
    s.P_R -= (du.dR + w * dh.dR) * half;
    s.P_Z -= (du.dZ + w * dh.dZ) * half;
    const double h = h_gap(s.R, s.Z, p);
    level_phase += h * half;
    shift_phase += (h + model_.band_energy_sum) / dim * half;
  };
  kick();
  drift(s, cfg_.dt);
  kick();
}

void Propagator::finish_decoupled(MappedState& s, double level_phase, double shift_phase,
                                  long n_steps) const {
  const double t = cfg_.dt * static_cast<double>(n_steps);
  rotate(s.x[0], s.p[0], std::cos(level_phase - shift_phase), std::sin(level_phase - shift_phase));
  for (std::size_t k = 0; k < model_.band.energies.size(); ++k) {
    const double angle = model_.band.energies[k] * t - shift_phase;
    rotate(s.x[k + 1], s.p[k + 1], std::cos(angle), std::sin(angle));
  }
}

MappedState step(const MappedState& s, const IntegratorConfig& cfg, const SystemModel& model) {
  MappedState out = s;
  Propagator(model, cfg).step(out);
  return out;
}

void propagate_electronic(MappedState& s, const SystemModel& model, double t, bool exact,
                          int substeps) {
  if (exact) {
    const auto pm = build_potential_matrix(s.R, s.Z, model, s.n_electrons);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(pm.dense_traceless());
    if (solver.info() != Eigen::Success) throw Error("electronic eigendecomposition failed");
    const Eigen::Index n = pm.dimension();
    const Eigen::Map<Eigen::VectorXd> x(s.x.data(), n);
    const Eigen::Map<Eigen::VectorXd> q(s.p.data(), n);
    Eigen::VectorXd a = solver.eigenvectors().transpose() * x;
    Eigen::VectorXd b = solver.eigenvectors().transpose() * q;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = solver.eigenvalues()(j) * t;
      rotate(a(j), b(j), std::cos(w), std::sin(w));
    }
    Eigen::VectorXd xn = solver.eigenvectors() * a;
    Eigen::VectorXd qn = solver.eigenvectors() * b;
    for (Eigen::Index j = 0; j < n; ++j) {
      s.x[j] = xn(j);
      s.p[j] = qn(j);
    }
    return;
  }
  const double tau = t / substeps;
  std::vector<double> c, sn;
  fill_tables(model.band.energies, tau, c, sn);
  for (int i = 0; i < substeps; ++i) {
    coupling_flow(model, s, 0.5 * tau, false);
    level_flow(model, s, tau, c.data(), sn.data(), false);
    coupling_flow(model, s, 0.5 * tau, false);
  }
}

const char* to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::none:
      return "none";
    case DiscardReason::energy:
      return "energy";
    case DiscardReason::bond_range:
      return "bond_range";
  }
  return "unknown";
}

double vibrational_energy(const MappedState& s, const ModelParameters& p) {
  const auto& m = p.morse_neutral;
  return 0.5 * s.P_R * s.P_R / p.masses.reduced + morse(s.R - m.center, m.depth, m.range) +
         m.depth;
}

TrajectoryRecord run_trajectory(const MappedState& initial, const Propagator& propagator,
                                const TrajectoryObserver& observer) {
  const auto& cfg = propagator.config();
  const auto& model = propagator.model();
  const auto& p = model.params;
  const long n_steps = cfg.n_steps();
  const long every = cfg.record_every();
  const double omega0 =
      p.morse_neutral.range * std::sqrt(2.0 * p.morse_neutral.depth / p.masses.reduced);
  const long window_records =
      std::max(2L, std::lround(cfg.plateau_window / (cfg.dt * static_cast<double>(every))));

  TrajectoryRecord rec;
  rec.initial_state = initial;
  MappedState s = initial;
  rec.E0 = h_sym(s, model);
  rec.stop_time = cfg.dt * static_cast<double>(n_steps);

  std::deque<std::pair<double, double>> vib_window;
  bool decoupled = false;
  double level_phase = 0.0;
  double shift_phase = 0.0;
  long decoupled_steps = 0;
  double coupled_sum = 0.0;  // sum_k e_k n_k, constant once decoupled
  double n0 = 0.0;
  double norm2 = 0.0;
  const double dim = model.dimension();

  auto energy_now = [&]() {
    if (!decoupled) return h_sym(s, model);
    const double h = h_gap(s.R, s.Z, p);
    const double shift = (h + model.band_energy_sum) / dim;
    return kinetic_energy(s, p) + u0(s.R, s.Z, p) + s.n_electrons * shift +
           0.5 * (h * n0 + coupled_sum - shift * norm2);
  };

  auto record = [&](long index, double t, double energy) {
    rec.times.push_back(t);
    rec.snapshots.push_back({s.R, s.Z, s.P_R, s.P_Z, energy});
    if (observer) observer(index, t, s);
  };

  record(0, 0.0, rec.E0);
  const double e_scale = std::abs(rec.E0) > 0.0 ? std::abs(rec.E0) : 1.0;

  for (long i = 1; i <= n_steps; ++i) {
    const double t = cfg.dt * static_cast<double>(i);
    if (!decoupled) {
      try {
        propagator.step(s);
      } catch (const NonFiniteStateError& e) {
        s = e.last_finite_state;
        rec.discard_reason = DiscardReason::energy;
        rec.max_energy_drift = std::numeric_limits<double>::infinity();
        rec.stop_time = t;
        break;
      }
    } else {
      propagator.step_decoupled(s, level_phase, shift_phase);
      ++decoupled_steps;
    }
    if (s.R < cfg.R_min || s.R > cfg.R_max) {
      rec.discard_reason = DiscardReason::bond_range;
      if (!decoupled) rec.stop_time = t;
      break;
    }
    const double energy = energy_now();
    const double drift = std::abs(energy - rec.E0) / e_scale;
    rec.max_energy_drift = std::max(rec.max_energy_drift, drift);
    if (!(drift <= cfg.energy_tol)) {
      rec.discard_reason = DiscardReason::energy;
      if (!decoupled) rec.stop_time = t;
      break;
    }
    if (i % every != 0) continue;

    const long index = i / every;
    record(index, t, energy);
    if (decoupled) continue;

    const bool outgoing = s.P_Z > 0.0 && s.Z > cfg.Z_detect &&
                          coupling_profile(s.Z, p) < cfg.coupling_cutoff;
    if (outgoing && !rec.exit_record) rec.exit_record = index;
    if (!rec.exit_record || !cfg.early_stop) continue;

    vib_window.emplace_back(t, vibrational_energy(s, p) / omega0);
    if (static_cast<long>(vib_window.size()) > window_records) vib_window.pop_front();
    if (static_cast<long>(vib_window.size()) == window_records &&
        std::abs(linear_slope(vib_window)) < cfg.plateau_slope) {
      decoupled = true;
      rec.stop_time = t;
      n0 = s.x[0] * s.x[0] + s.p[0] * s.p[0];
      norm2 = 0.0;
      coupled_sum = 0.0;
      for (int k = 0; k < model.dimension(); ++k) norm2 += s.x[k] * s.x[k] + s.p[k] * s.p[k];
      for (int k = 0; k < model.n_states(); ++k)
        coupled_sum += model.band.energies[k] * (s.x[k + 1] * s.x[k + 1] + s.p[k + 1] * s.p[k + 1]);
    }
  }
  if (decoupled) propagator.finish_decoupled(s, level_phase, shift_phase, decoupled_steps);
  rec.final_state = s;
  return rec;
}

}  // namespace nah
