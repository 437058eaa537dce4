#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nah/model_potential.hpp"

// Tidy CSVs for plotting, derived from finished run directories. Nothing
// here integrates dynamics; the only physics evaluated is the U1 - U0
// contour grid.

namespace nah {

struct ContourGrid {
  double R_min = 0.0, R_max = 0.0;  // atomic units
  double Z_min = 0.0, Z_max = 0.0;
  int n_R = 0, n_Z = 0;
};
/// R in [0.9, 2.4] A, Z in [0, 5] A, 61 x 101 nodes.
ContourGrid default_contour_grid();

/// R_angstrom,Z_angstrom,h_gap_eV
std::string hgap_contour_csv(const ModelParameters& p, const ContourGrid& grid);

/// Minimal reader for the CSVs this project writes: header + numeric rows.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  [[nodiscard]] int column(const std::string& name) const;  // throws if absent
};
Table read_csv(const std::filesystem::path& path);

struct AnalyzeSummary {
  int n_cells = 0;
  std::vector<std::filesystem::path> written;
};

/// Finds every <run>/<nu_i>/<E_i>/manifest.json below `run_dir` and writes:
///   survival.csv          nu_i,E_i_eV,nu_f,probability,stderr
///   distribution.csv      nu_i,E_i_eV,nu_f,probability,stderr,relative
///   timeseries_<nu>_<E>.csv   time_fs and mean/stderr of R, Z and NO- population
///   mechanism_<nu>_<E>.csv    time_fs,R_angstrom,Z_angstrom
///   metal_fan_<nu>_<E>.csv    time_fs,k,energy_eV,population_change
///   hgap_contour.csv
/// Throws if no manifest is found.
AnalyzeSummary analyze(const std::filesystem::path& run_dir,
                       const std::filesystem::path& figures_dir);

}  // namespace nah
