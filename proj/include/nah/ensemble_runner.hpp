#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nah/integrator.hpp"
#include "nah/observables.hpp"
#include "nah/phase_space_sampling.hpp"

// Sweeps over (nu_i, E_i) cells. Each cell builds its Wigner tables once,
// draws initial conditions from per-index random streams, runs trajectories
// in blocks (OpenMP over the block, or a plain loop with one worker) and
// folds them into the accumulator in trajectory order. A checkpoint is
// written after every block, so resuming reproduces the uninterrupted run
// byte for byte.
//
// Run config (JSON, units in key names); optional keys show their defaults:
//   model_file            path, relative to the config file
//   nu_i                  int or list of ints
//   E_i_eV                number or list
//   n_trajectories        int
//   seed                  unsigned 64-bit int
//   output_dir            path, relative to the working directory
//   n_workers             0 (= all available threads)
//   block_size            32
//   band_N                overrides band.N of the model file
//   integrator { dt_fs 0.015, t_max_fs 500, energy_tol 1e-3, R_min_bohr 0.5,
//                R_max_bohr 10, electronic_substeps 1, scheme "split",
//                record_stride_fs 0.5, early_stop true, Z_detect_angstrom 5,
//                coupling_cutoff 1e-3, plateau_window_fs 20,
//                plateau_slope_per_fs 1e-4 }
//   sampling   { dvr_R_min_angstrom 0.7, dvr_R_max_angstrom 2.6, dvr_points 121,
//                wigner_refine 4, momentum_step_au 0.25, momentum_margin_sqrt_mu_omega 6,
//                burn_in 1000, thinning 50, Z_i_angstrom 5,
//                gamma_Z_per_angstrom2 4.544, gamma 0 }
//   analysis   { plateau_fraction 0.2, extra_vib_levels 5 }

namespace nah {

struct RunConfig {
  std::filesystem::path model_file;
  std::vector<int> nu_i;
  std::vector<double> E_i;  // atomic units
  long n_trajectories = 0;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  int n_workers = 0;
  int block_size = 32;
  int band_N = 0;  // 0: keep the model file's value
  IntegratorConfig integrator = default_integrator_config();
  SamplingOptions sampling;
  double plateau_fraction = 0.2;
  int extra_vib_levels = 5;

  /// Throws nah::Error on the first invalid field.
  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical JSON of everything that affects results (not workers or paths).
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct CellSpec {
  int nu_i = 0;
  double E_i = 0.0;
};

/// <output_dir>/<nu_i>/<E_i in eV>
std::filesystem::path cell_directory(const std::filesystem::path& output_dir, const CellSpec& cell);

struct RunOptions {
  bool resume = false;
  bool force = false;
  bool write_outputs = true;
  /// Test hook: stop (as if killed) once this many blocks of a cell are done.
  long stop_after_blocks = -1;
  std::function<void(const std::string&)> log;
};

struct CellResult {
  CellSpec cell;
  std::filesystem::path directory;
  bool completed = false;
  bool skipped = false;  // already complete and resumed
  EnsembleResult result;
  double acceptance = 0.0;
  std::string metropolis_diagnostics;
};

/// Runs one cell with an already loaded model.
CellResult run_cell(const RunConfig& cfg, const ModelParameters& model, const CellSpec& cell,
                    const RunOptions& options);

/// Every (nu_i, E_i) combination of the config.
std::vector<CellResult> run_sweep(const RunConfig& cfg, const RunOptions& options);

/// Loads the model file of `cfg`, applying band_N.
ModelParameters load_run_model(const RunConfig& cfg);

enum class ConvergenceAxis { band_size, n_trajectories, dt };

struct ConvergenceEntry {
  double value = 0.0;  // N, trajectory count, or dt in fs
  std::vector<FinalStateRow> final_states;
  double max_change = 0.0;     // vs previous entry, over nu_f
  double max_stderr = 0.0;     // largest combined stderr of this entry
};

struct ConvergenceReport {
  ConvergenceAxis axis = ConvergenceAxis::band_size;
  CellSpec cell;
  std::vector<ConvergenceEntry> entries;
};

/// Runs the first cell of `cfg` in memory once per axis value.
ConvergenceReport convergence_report(const RunConfig& cfg, ConvergenceAxis axis,
                                     const std::vector<double>& values, const RunOptions& options);
std::string convergence_to_csv(const ConvergenceReport& report);

}  // namespace nah
