#include "nah/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "nah/units.hpp"

namespace nah {

namespace {

const ReferenceEnergy& find_anchor(const std::vector<ReferenceEnergy>& reference,
                                   const ReferenceGeometry& anchor) {
  constexpr double tol = 1e-4;  // bohr
  for (const auto& r : reference)
    if (std::abs(r.R - anchor.R) < tol && std::abs(r.Z - anchor.Z) < tol) return r;
  std::ostringstream os;
  os << "reference data has no point at the anchor geometry R=" << units::to_angstrom(anchor.R)
     << " A, Z=" << units::to_angstrom(anchor.Z) << " A";
  throw Error(os.str());
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

std::vector<GeometrySlice> standard_slices(const ModelParameters& p) {
  using units::angstrom;
  std::vector<GeometrySlice> slices(3);
  slices[0].name = "Z_scan_R0";
  for (double z : linspace(1.0, 5.0, 17))
    slices[0].points.push_back({p.morse_neutral.center, angstrom(z)});
  slices[1].name = "R_scan_Z1.5";
  for (double r : linspace(0.95, 1.6, 14)) slices[1].points.push_back({angstrom(r), angstrom(1.5)});
  slices[2].name = "R_scan_Z2.5";
  for (double r : linspace(0.95, 1.6, 14)) slices[2].points.push_back({angstrom(r), angstrom(2.5)});
  return slices;
}

std::vector<ReferenceEnergy> synthetic_reference(const ModelParameters& p,
                                                 const std::vector<GeometrySlice>& slices,
                                                 double anchor_energy) {
  const auto anchor = default_reference_geometry();
  const ModelParameters model = anchor_energy_offset(p, anchor, anchor_energy);
  const auto band = discretize_band(model);
  std::vector<ReferenceEnergy> out;
  out.push_back({anchor.R, anchor.Z, anchor_energy});
  for (const auto& s : slices)
    for (const auto& g : s.points)
      out.push_back({g.R, g.Z, adiabatic_ground_energy(g.R, g.Z, model, band)});
  return out;
}

double fit_residual(double gamma, const std::vector<ReferenceEnergy>& reference,
                    const ModelParameters& p, const ReferenceGeometry& anchor) {
  ModelParameters trial = p;
  trial.coupling.gamma = gamma;
  const auto& a = find_anchor(reference, anchor);
  trial = anchor_energy_offset(trial, anchor, a.E);
  const auto band = discretize_band(trial);
  double sum = 0.0;
  for (const auto& r : reference) {
    const double d = adiabatic_ground_energy(r.R, r.Z, trial, band) - r.E;
    sum += d * d;
  }
  return sum;
}

FitResult refit_gamma(const std::vector<ReferenceEnergy>& reference, const ModelParameters& p,
                      const FitOptions& options) {
  if (reference.size() < 2) throw Error("refit needs at least two reference points");
  if (!(options.gamma_max > options.gamma_min) || options.gamma_min < 0.0)
    throw Error("gamma bounds must satisfy 0 <= min < max");
  find_anchor(reference, options.anchor);

  auto residual = [&](double g) { return fit_residual(g, reference, p, options.anchor); };

  const auto [g_brent, r_brent] = boost::math::tools::brent_find_minima(
      residual, options.gamma_min, options.gamma_max, std::numeric_limits<double>::digits / 2);
  double best_g = g_brent;
  double best_r = r_brent;
  for (double edge : {options.gamma_min, options.gamma_max}) {
    const double r = residual(edge);
    if (r <= best_r) {
      best_g = edge;
      best_r = r;
    }
  }

  // Gamma = 0 is a physical limit; any other bound means the true minimum
  // lies outside the bracket.
  const double span = options.gamma_max - options.gamma_min;
  const bool at_upper = best_g >= options.gamma_max - 1e-6 * span;
  const bool at_lower = best_g <= options.gamma_min + 1e-6 * span && options.gamma_min > 0.0;
  if (at_upper || at_lower) {
    std::vector<std::pair<double, double>> curve;
    for (double g : linspace(options.gamma_min, options.gamma_max, options.curve_points))
      curve.emplace_back(g, residual(g));
    std::ostringstream os;
    os << "no residual minimum inside gamma bounds [" << units::to_eV(options.gamma_min) << ", "
       << units::to_eV(options.gamma_max) << "] eV; best at bound "
       << units::to_eV(best_g) << " eV";
    throw FitError(os.str(), std::move(curve));
  }

  FitResult result;
  result.gamma = best_g;
  result.residual = best_r;
  result.rms = std::sqrt(best_r / static_cast<double>(reference.size()));
  result.model = p;
  result.model.coupling.gamma = best_g;
  const auto& a = find_anchor(reference, options.anchor);
  result.model = anchor_energy_offset(result.model, options.anchor, a.E);

  if (!options.band_sizes.empty()) {
    std::vector<Geometry> points;
    for (const auto& r : reference) points.push_back({r.R, r.Z});
    const auto curves =
        band_size_curves(result.model, points, options.band_sizes, options.anchor, a.E);
    const auto largest = std::max_element(curves.n_states.begin(), curves.n_states.end()) -
                         curves.n_states.begin();
    for (std::size_t b = 0; b < curves.n_states.size(); ++b) {
      ConvergenceRow row;
      row.n_states = curves.n_states[b];
      double sum = 0.0;
      for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = curves.energies[b][i] - reference[i].E;
        sum += d * d;
        row.max_deviation = std::max(
            row.max_deviation, std::abs(curves.energies[b][i] - curves.energies[largest][i]));
      }
      row.rms_residual = std::sqrt(sum / static_cast<double>(reference.size()));
      result.convergence.push_back(row);
    }
  }
  return result;
}

double BandSizeCurves::max_spread() const {
  double spread = 0.0;
  if (energies.empty()) return spread;
  for (std::size_t i = 0; i < energies.front().size(); ++i) {
    double lo = energies.front()[i];
    double hi = lo;
    for (const auto& e : energies) {
      lo = std::min(lo, e[i]);
      hi = std::max(hi, e[i]);
    }
    spread = std::max(spread, hi - lo);
  }
  return spread;
}

BandSizeCurves band_size_curves(const ModelParameters& p, const std::vector<Geometry>& points,
                                const std::vector<int>& band_sizes,
                                const ReferenceGeometry& anchor, double anchor_energy) {
  BandSizeCurves out;
  for (int n : band_sizes) {
    ModelParameters m = p;
    m.band.n_states = n;
    m = anchor_energy_offset(m, anchor, anchor_energy);
    const auto band = discretize_band(m);
    std::vector<double> e;
    e.reserve(points.size());
    for (const auto& g : points) e.push_back(adiabatic_ground_energy(g.R, g.Z, m, band));
    out.n_states.push_back(n);
    out.energies.push_back(std::move(e));
  }
  return out;
}

}  // namespace nah
