#pragma once

#include <stdexcept>
#include <string>
#include <vector>

// Newns-Anderson-Holstein model for a diatomic above a metal: two diabatic
// surfaces (neutral U0, anion U1) in the bond length R and surface distance Z,
// a discretized metal band, and the Z-dependent molecule-metal coupling.
//
// Everything here is in atomic units. See config.hpp for the file format that
// carries these values in eV / angstrom / amu.

namespace nah {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which closed form of the Fermi function to use.
/// `standard` is 1/(1+exp(beta(e-mu))). `printed` flips the sign of the
/// exponent and exists only so the two forms can be compared.
enum class FermiConvention { standard, printed };

struct MorseTerm {
  double depth = 0.0;   // D
  double range = 0.0;   // a
  double center = 0.0;  // R0 / R1 / Z1
};

struct ModelParameters {
  MorseTerm morse_neutral;  // NO bond in U0
  MorseTerm morse_anion;    // NO- bond in U1
  MorseTerm anion_surface;  // NO- attraction to the surface in U1
  struct {
    double b0 = 0.0;
    double Z0 = 0.0;
  } repulsion;
  struct {
    double c0 = 0.0;
    double c1 = 0.0;
  } offsets;
  struct {
    double gamma = 0.0;    // hybridization strength
    double a_tilde = 1.0;  // decay length of the coupling
  } coupling;
  struct {
    double width = 0.0;  // Delta E
    int n_states = 1;    // N
    double mu = 0.0;
    double beta = 1.0;
  } band;
  struct {
    double total = 0.0;    // molecule mass, drives Z
    double reduced = 0.0;  // bond reduced mass, drives R
  } masses;
  FermiConvention fermi = FermiConvention::standard;
  /// Added to the adiabatic ground energy so it shares a zero with reference data.
  double energy_offset = 0.0;

  /// Throws nah::Error naming the first violated constraint.
  void validate() const;
};

/// Metal band levels and their bare couplings Vbar_k = sqrt(Gamma/2pi) w_k.
struct BandDiscretization {
  std::vector<double> energies;
  std::vector<double> coupling_scale;
  double weight = 0.0;  // w_k, identical for every level

  [[nodiscard]] int size() const { return static_cast<int>(energies.size()); }
  /// Sum of Vbar_k^2; equals Gamma * DeltaE / (2 pi).
  [[nodiscard]] double coupling_norm2() const;
};

struct Gradient {
  double dR = 0.0;
  double dZ = 0.0;
};

// D[exp(-2 a r) - 2 exp(-a r)]
double morse(double r, double depth, double range);
double morse_derivative(double r, double depth, double range);

/// exp(-b0 (Z - Z0)) with a 1 eV amplitude, the energy unit of the config.
double surface_repulsion(double Z, const ModelParameters& p);
double u0(double R, double Z, const ModelParameters& p);
double u1(double R, double Z, const ModelParameters& p);
/// Energy of the anion level relative to the neutral diabat, U1 - U0.
double h_gap(double R, double Z, const ModelParameters& p);
Gradient u0_gradient(double R, double Z, const ModelParameters& p);
Gradient u1_gradient(double R, double Z, const ModelParameters& p);
Gradient h_gap_gradient(double R, double Z, const ModelParameters& p);

/// 1 - tanh(Z / a_tilde) and its Z derivative.
double coupling_profile(double Z, const ModelParameters& p);
double coupling_profile_derivative(double Z, const ModelParameters& p);

std::vector<double> coupling_vk(double Z, const BandDiscretization& band, const ModelParameters& p);

/// Uniform midpoint placement of N levels across [mu - dE/2, mu + dE/2].
BandDiscretization discretize_band(const ModelParameters& p);

double fermi(double energy, const ModelParameters& p);

/// Eigenvalues (ascending) of the arrowhead matrix with corner `corner`,
/// remaining diagonal `diagonal` and border `border`. Solved through the
/// secular equation, O(N^2).
std::vector<double> arrowhead_eigenvalues(double corner, const std::vector<double>& diagonal,
                                          const std::vector<double>& border);

/// Dense reference for the above (Eigen self-adjoint solver), kept for tests.
std::vector<double> arrowhead_eigenvalues_dense(double corner, const std::vector<double>& diagonal,
                                                const std::vector<double>& border);

class EigenSolverError : public Error {
 public:
  EigenSolverError(double R, double Z, const std::string& what);
  double R;
  double Z;
};

/// E0 = U0 + sum_j f(lambda_j) lambda_j over all N+1 single-particle levels,
/// without energy_offset.
double adiabatic_ground_energy_raw(double R, double Z, const ModelParameters& p,
                                   const BandDiscretization& band);
/// Raw energy plus p.energy_offset.
double adiabatic_ground_energy(double R, double Z, const ModelParameters& p,
                               const BandDiscretization& band);
double adiabatic_ground_energy(double R, double Z, const ModelParameters& p);

/// Geometry at which model and reference energies are pinned together.
struct ReferenceGeometry {
  double R;
  double Z;
};
ReferenceGeometry default_reference_geometry();

/// Returns p with energy_offset set so that E0(ref) == reference_energy.
ModelParameters anchor_energy_offset(ModelParameters p, const ReferenceGeometry& ref,
                                     double reference_energy);

}  // namespace nah
