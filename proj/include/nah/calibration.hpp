#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nah/model_potential.hpp"

// Refitting the hybridization strength Gamma against reference ground-state
// energies, with every other model parameter held fixed.

namespace nah {

struct ReferenceEnergy {
  double R = 0.0;
  double Z = 0.0;
  double E = 0.0;
};

struct Geometry {
  double R = 0.0;
  double Z = 0.0;
};

/// A named 1-D cut through (R, Z) used for fitting and convergence checks.
struct GeometrySlice {
  std::string name;
  std::vector<Geometry> points;
};

/// Three cuts: Z scan at the neutral bond length, R scans at Z = 1.5 and 2.5 A.
std::vector<GeometrySlice> standard_slices(const ModelParameters& p);

/// Reference energies computed from the model itself (offset anchored so the
/// reference geometry reads `anchor_energy`). Used as a stand-in for external
/// electronic-structure data.
std::vector<ReferenceEnergy> synthetic_reference(const ModelParameters& p,
                                                 const std::vector<GeometrySlice>& slices,
                                                 double anchor_energy = 0.0);

struct FitOptions {
  double gamma_min = 0.0;
  double gamma_max = 0.0;
  std::vector<int> band_sizes{50, 100, 200};
  ReferenceGeometry anchor = default_reference_geometry();
  int curve_points = 41;
};

struct ConvergenceRow {
  int n_states = 0;
  double rms_residual = 0.0;   // against the reference energies
  double max_deviation = 0.0;  // against the largest band size, same points
};

struct FitResult {
  double gamma = 0.0;
  double residual = 0.0;  // sum of squared errors at gamma
  double rms = 0.0;
  ModelParameters model;  // fitted gamma and anchored offset
  std::vector<ConvergenceRow> convergence;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, std::vector<std::pair<double, double>> curve)
      : Error(what), residual_curve(std::move(curve)) {}
  std::vector<std::pair<double, double>> residual_curve;  // (gamma, residual)
};

/// Sum of squared deviations between model E0 (offset re-anchored on the
/// reference point at the anchor geometry) and the reference energies.
double fit_residual(double gamma, const std::vector<ReferenceEnergy>& reference,
                    const ModelParameters& p, const ReferenceGeometry& anchor);

FitResult refit_gamma(const std::vector<ReferenceEnergy>& reference, const ModelParameters& p,
                      const FitOptions& options);

/// E0 on each geometry for several band sizes, all anchored on `anchor`.
struct BandSizeCurves {
  std::vector<int> n_states;
  std::vector<std::vector<double>> energies;  // [band size][point]
  [[nodiscard]] double max_spread() const;    // over points, max - min across band sizes
};
BandSizeCurves band_size_curves(const ModelParameters& p, const std::vector<Geometry>& points,
                                const std::vector<int>& band_sizes,
                                const ReferenceGeometry& anchor, double anchor_energy);

}  // namespace nah
