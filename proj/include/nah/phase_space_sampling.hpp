#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nah/mapping_hamiltonian.hpp"

// Initial conditions for the trajectory ensemble:
//   - translation: Gaussian Wigner function of a coherent state in (Z, P_Z);
//   - vibration: Wigner function of a Morse eigenstate, sampled by Metropolis
//     on |W| with the sign carried as a weight;
//   - electrons: metal levels occupied with Fermi probabilities and placed on
//     the circle x^2 + p^2 = 2n + gamma with a random phase.

namespace nah {

/// Per-trajectory generator: a splitmix64 hash of (seed, stream, index)
/// seeds a mt19937_64, so draws do not depend on scheduling order.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// --- vibrational eigenstates --------------------------------------------

struct DvrGrid {
  double R_min = 0.0;
  double R_max = 0.0;
  int n_points = 0;
  [[nodiscard]] double spacing() const { return (R_max - R_min) / (n_points - 1); }
};

/// [0.7, 2.6] A with 121 points; wide enough that states up to the high
/// teens vanish at both edges for typical NO parameters.
DvrGrid default_dvr_grid();

/// Number of bound states of the neutral Morse bond, floor(sqrt(2 mu D)/a - 1/2) + 1.
int morse_bound_state_count(const ModelParameters& p);
/// hbar w (nu + 1/2) - [hbar w (nu + 1/2)]^2 / 4D, measured from the well bottom.
double morse_level_analytic(int nu, const ModelParameters& p);
double morse_frequency(const ModelParameters& p);

struct MorseEigenstates {
  std::vector<double> grid;   // DVR points
  double spacing = 0.0;
  Eigen::VectorXd energies;   // from the well bottom, ascending
  Eigen::MatrixXd vectors;    // columns are unit-norm DVR coefficients
  /// psi(R) of level nu anywhere, by sinc interpolation of the coefficients.
  [[nodiscard]] double wavefunction(int nu, double R) const;
  [[nodiscard]] int size() const { return static_cast<int>(energies.size()); }
};

/// Colbert-Miller sinc-DVR for the neutral Morse bond with the reduced mass.
/// Throws if `n_levels` exceeds the bound-state count.
MorseEigenstates morse_eigenstates_dvr(const ModelParameters& p, const DvrGrid& grid,
                                       int n_levels);

// --- Wigner tables -------------------------------------------------------

struct WignerOptions {
  int refine = 4;                 // table R spacing = DVR spacing / refine
  double momentum_step = 0.25;    // target table P spacing (au)
  double momentum_margin = 6.0;   // beyond the classical momentum, in units of sqrt(mu w0)
  double edge_tolerance = 1e-8;   // largest allowed |c_i| at the DVR edges
};

/// W(R, P) of one eigenstate on a uniform grid, hbar = 1, so that
/// sum W dR dP = 1 and sum_P W dP = |psi(R)|^2.
struct WignerTable {
  int nu = 0;
  double R0 = 0.0;
  double dR = 0.0;
  int n_R = 0;
  double P0 = 0.0;
  double dP = 0.0;
  int n_P = 0;
  std::vector<double> W;  // row-major [i_R * n_P + i_P]
  double norm = 0.0;
  double max_imaginary = 0.0;
  double max_marginal_error = 0.0;  // against |psi|^2 on the R grid

  [[nodiscard]] double R(int i) const { return R0 + dR * i; }
  [[nodiscard]] double P(int j) const { return P0 + dP * j; }
  [[nodiscard]] double at(int i, int j) const { return W[static_cast<std::size_t>(i) * n_P + j]; }
  [[nodiscard]] double R_end() const { return R(n_R - 1); }
  [[nodiscard]] double P_end() const { return P(n_P - 1); }
  [[nodiscard]] bool contains(double r, double p) const;
  /// Bilinear interpolation; 0 outside the grid.
  [[nodiscard]] double value(double r, double p) const;
  [[nodiscard]] double marginal(int i) const;
  [[nodiscard]] double min_value() const;
};

/// The table uses a periodic momentum grid whose period matches the R
/// spacing, which makes the P marginal exact before cropping; cropping to
/// the classically relevant window is verified by max_marginal_error.
WignerTable build_wigner_table(const MorseEigenstates& states, int nu, const ModelParameters& p,
                               const WignerOptions& options = {});

/// CSV with header R_angstrom,P_R_au,W.
std::string wigner_to_csv(const WignerTable& table);

// --- Metropolis on |W| -----------------------------------------------------

struct MetropolisOptions {
  int burn_in = 1000;
  int thinning = 50;
  double initial_step_fraction = 0.1;  // of each box side
  double target_low = 0.4;
  double target_high = 0.6;
  int tune_rounds = 40;
  int tune_proposals = 2000;
};

struct PhaseSample {
  double R = 0.0;
  double P = 0.0;
  double sign = 1.0;
};

struct MetropolisResult {
  std::vector<PhaseSample> samples;
  double acceptance = 0.0;        // over the production chain
  double step_fraction = 0.0;     // after tuning
  bool acceptance_in_range = false;
  std::string diagnostics;        // empty unless acceptance fell outside [0.2, 0.8]
};

MetropolisResult metropolis_sample_wigner(const WignerTable& table, int n_samples,
                                          const MetropolisOptions& options, std::mt19937_64& rng);

// --- translation and electrons ---------------------------------------------

struct TranslationalOptions {
  double Z_i = 0.0;      // centre of the incoming packet
  double gamma_Z = 0.0;  // coherent-state width parameter
};
/// Z_i = 5 A, gamma_Z = 4.544 A^-2.
TranslationalOptions default_translational_options();

/// -sqrt(2 M E_i)
double incoming_momentum(double E_i, const ModelParameters& p);

struct TranslationalSample {
  double Z = 0.0;
  double P_Z = 0.0;
};
TranslationalSample sample_translational(double E_i, const ModelParameters& p,
                                         const TranslationalOptions& options, std::mt19937_64& rng);

struct ElectronicSample {
  std::vector<double> x;
  std::vector<double> p;
  std::vector<std::uint8_t> occupations;  // index 0 is the molecular level, always 0
};
ElectronicSample sample_electronic(const SystemModel& model, double gamma, std::mt19937_64& rng);

// --- full initial conditions ---------------------------------------------

struct SampledInitialCondition {
  MappedState state;
  double weight = 1.0;  // sign of W at the vibrational point
  std::vector<std::uint8_t> occupations;
};

struct SamplingOptions {
  DvrGrid dvr = default_dvr_grid();
  WignerOptions wigner;
  MetropolisOptions metropolis;
  TranslationalOptions translation = default_translational_options();
  double gamma = 0.0;  // zero-point parameter of the electronic estimators
};

/// Everything needed to draw initial conditions for one (nu_i, E_i) cell.
/// The vibrational Metropolis chain is run once up front; translation and
/// electrons are drawn per trajectory index.
class InitialConditionSampler {
 public:
  InitialConditionSampler(const SystemModel& model, const WignerTable& table, double E_i,
                          int n_trajectories,
                          std::uint64_t seed, const SamplingOptions& options);

  [[nodiscard]] SampledInitialCondition draw(long index) const;
  [[nodiscard]] const MetropolisResult& vibrational_chain() const { return chain_; }

 private:
  const SystemModel& model_;
  double E_i_;
  std::uint64_t seed_;
  SamplingOptions options_;
  MetropolisResult chain_;
};

}  // namespace nah
