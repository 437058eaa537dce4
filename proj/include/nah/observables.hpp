#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nah/integrator.hpp"
#include "nah/phase_space_sampling.hpp"

// Phase-space estimators and their ensemble averages.
//
// Each trajectory carries a sign weight w (sign of the vibrational Wigner
// function at its initial point). Averages are the self-normalising ratio
// sum w B / sum w with delta-method standard errors.

namespace nah {

/// (x0^2 + p0^2 - gamma) / 2
double estimate_anion_population(const MappedState& s, double gamma);
/// (x_k^2 + p_k^2 - gamma) / 2 for metal level k = 1..N
double estimate_metal_population(const MappedState& s, int k, double gamma);
/// 2 pi W_nu(R, P_R); 0 outside the table.
double estimate_vib_population(double R, double P_R, const WignerTable& table);

/// Column layout of the recorded observables: R, Z, anion, N metal levels,
/// then vibrational populations nu = 0..n_vib-1.
struct SeriesLayout {
  int n_states = 0;
  int n_vib = 0;

  static constexpr int bond_length = 0;
  static constexpr int surface_distance = 1;
  static constexpr int anion = 2;
  [[nodiscard]] int metal(int k) const { return 2 + k; }  // k = 1..N
  [[nodiscard]] int vib(int nu) const { return 3 + n_states + nu; }
  [[nodiscard]] int size() const { return 3 + n_states + n_vib; }
  /// File-name friendly: bond_length, metal_population_7, vib_population_3, ...
  [[nodiscard]] std::string name(int series) const;
};

/// Observables of one trajectory on the record grid.
class TrajectoryObservables {
 public:
  TrajectoryObservables(const SeriesLayout& layout, long n_records,
                        const std::vector<WignerTable>* tables, double gamma);

  /// Observer hook for run_trajectory.
  void record(long index, const MappedState& s);
  /// Per-trajectory final values: mean over the trailing `fraction` of the
  /// records after `exit_record` (all records if the molecule never left).
  void finalize(std::optional<long> exit_record, double fraction);

  [[nodiscard]] double value(long record, int series) const {
    return values_[static_cast<std::size_t>(record) * layout_.size() + series];
  }
  [[nodiscard]] const SeriesLayout& layout() const { return layout_; }
  [[nodiscard]] long n_records() const { return n_records_; }
  [[nodiscard]] long recorded() const { return recorded_; }
  [[nodiscard]] const std::vector<double>& finals() const { return finals_; }
  [[nodiscard]] double final_leak() const { return final_leak_; }
  [[nodiscard]] double max_electron_drift() const { return max_electron_drift_; }
  [[nodiscard]] double max_norm_drift() const { return max_norm_drift_; }

 private:
  SeriesLayout layout_;
  long n_records_;
  const std::vector<WignerTable>* tables_;
  double gamma_;
  std::vector<double> values_;
  std::vector<std::uint8_t> leaked_;
  long recorded_ = 0;
  std::vector<double> finals_;  // one per vibrational level
  double final_leak_ = 0.0;
  double n_e0_ = 0.0;
  double norm0_ = 0.0;
  double max_electron_drift_ = 0.0;
  double max_norm_drift_ = 0.0;
};

struct ObservableSeries {
  std::string name;
  std::vector<double> times;   // atomic units
  std::vector<double> values;
  std::vector<double> errors;  // standard errors
};

struct FinalStateRow {
  int nu_f = 0;
  double probability = 0.0;
  double error = 0.0;            // combined standard error
  double ensemble_error = 0.0;   // delta-method standard error
  double plateau_spread = 0.0;   // see plateau_spread()
};

struct EnsembleStatistics {
  long n_trajectories = 0;
  long n_used = 0;
  long n_discarded_energy = 0;
  long n_discarded_bond = 0;
  long n_failed = 0;
  double weight_sum = 0.0;       // sum of signs
  double abs_weight_sum = 0.0;
  double max_energy_drift = 0.0;   // over used trajectories
  long n_within_energy_tol = 0;    // among all completed trajectories
  double max_electron_drift = 0.0;
  double max_norm_drift = 0.0;
  double leaked_probability = 0.0;
};

struct EnsembleResult {
  SeriesLayout layout;
  std::vector<ObservableSeries> series;
  std::vector<FinalStateRow> final_states;
  EnsembleStatistics stats;
  long exit_index = -1;          // first record past the turning point with mean Z >= Z_detect
  long plateau_begin = 0;        // record range of the plateau window
  long plateau_end = 0;

  [[nodiscard]] const ObservableSeries& get(int index) const { return series[index]; }
};

/// Running sums over trajectories, folded strictly in trajectory order so the
/// result does not depend on how trajectories were scheduled.
class EnsembleAccumulator {
 public:
  EnsembleAccumulator(const SeriesLayout& layout, long n_records, double record_dt);

  void add(const TrajectoryObservables& obs, double weight, const TrajectoryRecord& rec);
  void add_discarded(const TrajectoryRecord& rec);
  void add_failed();

  /// Bit-exact serialization for checkpoints.
  [[nodiscard]] std::string serialize() const;
  static EnsembleAccumulator deserialize(const std::string& bytes);

  /// Throws if no trajectory was used.
  [[nodiscard]] EnsembleResult result(double Z_detect, double plateau_fraction) const;

  [[nodiscard]] const EnsembleStatistics& stats() const { return stats_; }

 private:
  SeriesLayout layout_;
  long n_records_;
  double record_dt_;
  double w1_ = 0.0;  // sum w
  double w2_ = 0.0;  // sum w^2
  std::vector<double> s1_, s2_, s3_;     // per (record, series): sum wB, w^2 B, w^2 B^2
  std::vector<double> f1_, f2_, f3_;     // same for per-trajectory finals
  double leak_ = 0.0;                    // sum w * leak
  EnsembleStatistics stats_;
};

/// Plateau extraction shared by the accumulator and tests: index of the
/// first record after the minimum of `z` with z >= z_detect, or -1.
long exit_index(const std::vector<double>& z, double z_detect);

inline constexpr int plateau_blocks = 4;
/// Sample std of the means of `plateau_blocks` equal sub-windows of
/// v[begin, end); 0 when fewer than two records.
double plateau_spread(const std::vector<double>& v, long begin, long end);

// --- CSV -----------------------------------------------------------------

/// time_fs,value,stderr ; lengths in angstrom, populations dimensionless.
std::string series_to_csv(const ObservableSeries& s, bool length_in_angstrom);
/// nu_f,probability,stderr
std::string final_states_to_csv(const std::vector<FinalStateRow>& rows);

}  // namespace nah
