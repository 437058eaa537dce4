#include "nah/model_potential.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "nah/units.hpp"

namespace nah {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(std::string("invalid model parameters: ") + what);
}

}  // namespace

void ModelParameters::validate() const {
  require(morse_neutral.depth > 0.0, "D0 must be > 0");
  require(morse_anion.depth > 0.0, "D1 must be > 0");
  require(anion_surface.depth > 0.0, "D2 must be > 0");
  require(morse_neutral.range > 0.0, "a0 must be > 0");
  require(morse_anion.range > 0.0, "a1 must be > 0");
  require(anion_surface.range > 0.0, "a2 must be > 0");
  require(repulsion.b0 > 0.0, "b0 must be > 0");
  require(coupling.a_tilde > 0.0, "a_tilde must be > 0");
  require(coupling.gamma >= 0.0, "Gamma must be >= 0");
  require(band.width > 0.0, "DeltaE must be > 0");
  require(band.n_states >= 1, "N must be >= 1");
  require(band.beta > 0.0, "beta must be > 0");
  require(masses.total > 0.0, "total mass must be > 0");
  require(masses.reduced > 0.0, "reduced mass must be > 0");
}

double BandDiscretization::coupling_norm2() const {
  double sum = 0.0;
  for (double v : coupling_scale) sum += v * v;
  return sum;
}

double morse(double r, double depth, double range) {
  const double e = std::exp(-range * r);
  return depth * (e * e - 2.0 * e);
}

double morse_derivative(double r, double depth, double range) {
  const double e = std::exp(-range * r);
  return 2.0 * depth * range * (e - e * e);
}

double surface_repulsion(double Z, const ModelParameters& p) {
  return units::eV(1.0) * std::exp(-p.repulsion.b0 * (Z - p.repulsion.Z0));
}

double u0(double R, double Z, const ModelParameters& p) {
  const auto& m = p.morse_neutral;
  return morse(R - m.center, m.depth, m.range) + surface_repulsion(Z, p) + p.offsets.c0;
}

double u1(double R, double Z, const ModelParameters& p) {
  const auto& m = p.morse_anion;
  const auto& s = p.anion_surface;
  return morse(R - m.center, m.depth, m.range) + morse(Z - s.center, s.depth, s.range) +
         p.offsets.c1;
}

double h_gap(double R, double Z, const ModelParameters& p) { return u1(R, Z, p) - u0(R, Z, p); }

Gradient u0_gradient(double R, double Z, const ModelParameters& p) {
  const auto& m = p.morse_neutral;
  return {morse_derivative(R - m.center, m.depth, m.range),
          -p.repulsion.b0 * surface_repulsion(Z, p)};
}

Gradient u1_gradient(double R, double Z, const ModelParameters& p) {
  const auto& m = p.morse_anion;
  const auto& s = p.anion_surface;
  return {morse_derivative(R - m.center, m.depth, m.range),
          morse_derivative(Z - s.center, s.depth, s.range)};
}

Gradient h_gap_gradient(double R, double Z, const ModelParameters& p) {
  const Gradient g0 = u0_gradient(R, Z, p);
  const Gradient g1 = u1_gradient(R, Z, p);
  return {g1.dR - g0.dR, g1.dZ - g0.dZ};
}

double coupling_profile(double Z, const ModelParameters& p) {
  return 1.0 - std::tanh(Z / p.coupling.a_tilde);
}

double coupling_profile_derivative(double Z, const ModelParameters& p) {
  const double t = std::tanh(Z / p.coupling.a_tilde);
  return -(1.0 - t * t) / p.coupling.a_tilde;
}

std::vector<double> coupling_vk(double Z, const BandDiscretization& band,
                                const ModelParameters& p) {
  const double g = coupling_profile(Z, p);
  std::vector<double> v(band.coupling_scale);
  for (double& x : v) x *= g;
  return v;
}

BandDiscretization discretize_band(const ModelParameters& p) {
  if (p.band.n_states < 1) throw Error("band discretization needs N >= 1");
  if (!(p.band.width > 0.0)) throw Error("band discretization needs DeltaE > 0");
  const int n = p.band.n_states;
  const double de = p.band.width / n;
  BandDiscretization band;
  band.weight = std::sqrt(de);
  const double vbar = std::sqrt(p.coupling.gamma / units::two_pi) * band.weight;
  band.energies.resize(n);
  band.coupling_scale.assign(n, vbar);
  for (int k = 0; k < n; ++k) band.energies[k] = p.band.mu - 0.5 * p.band.width + (k + 0.5) * de;
  return band;
}

double fermi(double energy, const ModelParameters& p) {
  double x = p.band.beta * (energy - p.band.mu);
  if (p.fermi == FermiConvention::printed) x = -x;
  if (x > 700.0) return 0.0;
  if (x < -700.0) return 1.0;
  return 1.0 / (1.0 + std::exp(x));
}

std::vector<double> arrowhead_eigenvalues(double corner, const std::vector<double>& diagonal,
                                          const std::vector<double>& border) {
  const std::size_t n = diagonal.size();
  std::vector<double> out;
  out.reserve(n + 1);

  // Deflate uncoupled levels and merge degenerate ones into a single
  // effective coupling; whatever remains has distinct poles.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return diagonal[a] < diagonal[b]; });
  std::vector<double> poles;
  std::vector<double> weights;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double w = 0.0;
    int members = 0;
    while (j < n && diagonal[order[j]] == diagonal[order[i]]) {
      const double v = border[order[j]];
      if (v != 0.0) {
        w += v * v;
        ++members;
      } else {
        out.push_back(diagonal[order[j]]);
      }
      ++j;
    }
    if (members > 0) {
      for (int extra = 1; extra < members; ++extra) out.push_back(diagonal[order[i]]);
      poles.push_back(diagonal[order[i]]);
      weights.push_back(w);
    }
    i = j;
  }

  const std::size_t m = poles.size();
  if (m == 0) {
    out.push_back(corner);
    std::sort(out.begin(), out.end());
    return out;
  }

  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double pad = std::sqrt(wsum) + 1.0;
  auto secular = [&](double x) {
    double s = x - corner;
    for (std::size_t i = 0; i < m; ++i) s -= weights[i] / (x - poles[i]);
    return s;
  };
  // The secular function increases monotonically between consecutive poles.
  auto bisect = [&](double lo, double hi) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (secular(mid) < 0.0)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };

  out.push_back(bisect(std::min(corner, poles.front()) - pad, poles.front()));
  for (std::size_t i = 0; i + 1 < m; ++i) out.push_back(bisect(poles[i], poles[i + 1]));
  out.push_back(bisect(poles.back(), std::max(corner, poles.back()) + pad));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> arrowhead_eigenvalues_dense(double corner, const std::vector<double>& diagonal,
                                                const std::vector<double>& border) {
  const auto n = static_cast<Eigen::Index>(diagonal.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n + 1);
  a(0, 0) = corner;
  for (Eigen::Index k = 0; k < n; ++k) {
    a(k + 1, k + 1) = diagonal[k];
    a(0, k + 1) = a(k + 1, 0) = border[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("dense eigensolver failed");
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

EigenSolverError::EigenSolverError(double R_, double Z_, const std::string& what)
    : Error([&] {
        std::ostringstream os;
        os << "eigensolver failure at R=" << units::to_angstrom(R_)
           << " A, Z=" << units::to_angstrom(Z_) << " A: " << what;
        return os.str();
      }()),
      R(R_),
      Z(Z_) {}

double adiabatic_ground_energy_raw(double R, double Z, const ModelParameters& p,
                                   const BandDiscretization& band) {
  const double h = h_gap(R, Z, p);
  if (!std::isfinite(h)) throw EigenSolverError(R, Z, "non-finite level energy");
  const auto levels = arrowhead_eigenvalues(h, band.energies, coupling_vk(Z, band, p));
  double e = u0(R, Z, p);
  for (double lambda : levels) {
    if (!std::isfinite(lambda)) throw EigenSolverError(R, Z, "non-finite eigenvalue");
    e += fermi(lambda, p) * lambda;
  }
  return e;
}

double adiabatic_ground_energy(double R, double Z, const ModelParameters& p,
                               const BandDiscretization& band) {
  return adiabatic_ground_energy_raw(R, Z, p, band) + p.energy_offset;
}

double adiabatic_ground_energy(double R, double Z, const ModelParameters& p) {
  return adiabatic_ground_energy(R, Z, p, discretize_band(p));
}

ReferenceGeometry default_reference_geometry() {
  return {units::angstrom(1.6), units::angstrom(6.02)};
}

ModelParameters anchor_energy_offset(ModelParameters p, const ReferenceGeometry& ref,
                                     double reference_energy) {
  const auto band = discretize_band(p);
  p.energy_offset = reference_energy - adiabatic_ground_energy_raw(ref.R, ref.Z, p, band);
  return p;
}

}  // namespace nah
