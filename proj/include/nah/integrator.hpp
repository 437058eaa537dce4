#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nah/mapping_hamiltonian.hpp"

namespace nah {

/// How the mapping variables are advanced.
///  - split: the Hamiltonian is split into free nuclear motion, the diagonal
///    part of V~ and the coupling border. Each piece has a closed-form flow,
///    nuclear kicks included, so the composition is symplectic and O(N).
///  - exact: kick / exact electronic rotation (dense eigendecomposition) /
///    drift / rotation / kick. O(N^3) per step; small N and tests only.
enum class ElectronicScheme { split, exact };

struct IntegratorConfig {
  double dt = 0.0;
  double t_max = 0.0;
  double energy_tol = 1e-3;          // relative |E(t)-E(0)|/|E(0)|
  double R_min = 0.5;                // bohr
  double R_max = 10.0;               // bohr
  int electronic_substeps = 1;
  ElectronicScheme scheme = ElectronicScheme::split;
  double record_stride = 0.0;        // time between recorded observations
  bool early_stop = true;
  double Z_detect = 0.0;             // exit plane for outgoing molecules
  double coupling_cutoff = 1e-3;     // V_k(Z)/Vbar_k below which the molecule is free
  double plateau_window = 0.0;       // trailing window of the plateau fit
  double plateau_slope = 0.0;        // |slope| of E_vib/(hbar w0) per unit time

  /// Throws nah::Error on dt <= 0, energy_tol <= 0, R_min >= R_max, etc.
  void validate() const;
  [[nodiscard]] long n_steps() const;
  [[nodiscard]] long record_every() const;
  [[nodiscard]] long n_records() const;
};

/// Defaults in atomic units: dt 1.5e-2 fs, t_max 500 fs, stride 0.5 fs,
/// Z_detect 5 A, plateau window 20 fs and slope 1e-4 per fs.
IntegratorConfig default_integrator_config();

class NonFiniteStateError : public Error {
 public:
  NonFiniteStateError(const std::string& what, MappedState last_finite)
      : Error(what), last_finite_state(std::move(last_finite)) {}
  MappedState last_finite_state;
};

/// Precomputes the per-step rotation tables for one (model, dt) pair.
class Propagator {
 public:
  Propagator(const SystemModel& model, const IntegratorConfig& cfg);

  /// Advances by cfg.dt (or -cfg.dt when `backward`). Throws
  /// NonFiniteStateError if the result is not finite.
  void step(MappedState& s, bool backward = false) const;

  /// Flow with the coupling border dropped: only nuclear motion is
  /// integrated, mapping phases are accumulated and applied by
  /// finish_decoupled(). Populations are constant in this regime.
  void step_decoupled(MappedState& s, double& level_phase, double& shift_phase) const;
  void finish_decoupled(MappedState& s, double level_phase, double shift_phase,
                        long n_steps) const;

  [[nodiscard]] const SystemModel& model() const { return model_; }
  [[nodiscard]] const IntegratorConfig& config() const { return cfg_; }

 private:
  void drift(MappedState& s, double tau) const;
  void split_step(MappedState& s, double dt) const;
  void exact_step(MappedState& s, double dt) const;

  const SystemModel& model_;
  IntegratorConfig cfg_;
  // cos/sin(e_k tau) for tau = +-dt/(2m), the level-flow substep.
  std::vector<double> cos_fwd_, sin_fwd_, sin_bwd_;
};

/// One step as a pure function.
MappedState step(const MappedState& s, const IntegratorConfig& cfg, const SystemModel& model);

/// Evolves x,p under dx/dt = V~p, dp/dt = -V~x with the nuclei frozen.
/// `exact` uses an eigendecomposition; otherwise `substeps` symmetric
/// diagonal/border splits.
void propagate_electronic(MappedState& s, const SystemModel& model, double t, bool exact,
                          int substeps = 1);

enum class DiscardReason { none, energy, bond_range };
const char* to_string(DiscardReason r);

struct Snapshot {
  double R = 0.0;
  double Z = 0.0;
  double P_R = 0.0;
  double P_Z = 0.0;
  double energy = 0.0;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Snapshot> snapshots;
  double E0 = 0.0;
  double max_energy_drift = 0.0;
  DiscardReason discard_reason = DiscardReason::none;
  MappedState initial_state;
  MappedState final_state;
  /// Time at which full propagation stopped and the decoupled continuation
  /// took over (t_max if it never did).
  double stop_time = 0.0;
  /// First record index at which the molecule was outgoing past Z_detect.
  std::optional<long> exit_record;
};

/// Called at t = 0 and every record_stride with the record index.
using TrajectoryObserver = std::function<void(long record, double t, const MappedState&)>;

/// Vibrational energy of the isolated neutral bond, used for plateau detection.
double vibrational_energy(const MappedState& s, const ModelParameters& p);

TrajectoryRecord run_trajectory(const MappedState& initial, const Propagator& propagator,
                                const TrajectoryObserver& observer = {});

}  // namespace nah
