#include "nah/phase_space_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nah/io.hpp"
#include "nah/units.hpp"

namespace nah {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double wrap(double v, double lo, double length) {
  double u = std::fmod(v - lo, length);
  if (u < 0.0) u += length;
  return lo + u;
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
  return std::mt19937_64(h);
}

DvrGrid default_dvr_grid() { return {units::angstrom(0.7), units::angstrom(2.6), 121}; }

double morse_frequency(const ModelParameters& p) {
  const auto& m = p.morse_neutral;
  return m.range * std::sqrt(2.0 * m.depth / p.masses.reduced);
}

int morse_bound_state_count(const ModelParameters& p) {
  const auto& m = p.morse_neutral;
  const double lambda = std::sqrt(2.0 * p.masses.reduced * m.depth) / m.range;
  return static_cast<int>(std::floor(lambda - 0.5)) + 1;
}

double morse_level_analytic(int nu, const ModelParameters& p) {
  const double x = morse_frequency(p) * (nu + 0.5);
  return x - x * x / (4.0 * p.morse_neutral.depth);
}

double MorseEigenstates::wavefunction(int nu, double R) const {
  const double u = (R - grid.front()) / spacing;
  const double nearest = std::round(u);
  const auto n = static_cast<int>(grid.size());
  if (std::abs(u - nearest) < 1e-12) {
    const int i = static_cast<int>(nearest);
    return (i >= 0 && i < n) ? vectors(i, nu) / std::sqrt(spacing) : 0.0;
  }
  // sin(pi (u - i)) = (-1)^i sin(pi u)
  const double s = std::sin(units::pi * u) / units::pi;
  double sum = 0.0;
  double sign = 1.0;
  for (int i = 0; i < n; ++i, sign = -sign) sum += vectors(i, nu) * sign * s / (u - i);
  return sum / std::sqrt(spacing);
}

MorseEigenstates morse_eigenstates_dvr(const ModelParameters& p, const DvrGrid& grid,
                                       int n_levels) {
  const int bound = morse_bound_state_count(p);
  if (n_levels < 1 || n_levels > bound)
    throw Error("requested " + std::to_string(n_levels) + " Morse levels but the neutral bond has " +
                std::to_string(bound) + " bound states (nu <= " + std::to_string(bound - 1) + ")");
  if (grid.n_points < 3 || !(grid.R_max > grid.R_min)) throw Error("invalid DVR grid");
  const int n = grid.n_points;
  const double d = grid.spacing();
  const double mu = p.masses.reduced;
  const auto& m = p.morse_neutral;

  MorseEigenstates out;
  out.spacing = d;
  out.grid.resize(n);
  Eigen::MatrixXd H(n, n);
  const double scale = 1.0 / (2.0 * mu * d * d);
  for (int i = 0; i < n; ++i) {
    out.grid[i] = grid.R_min + d * i;
    for (int j = 0; j < n; ++j) {
      const int k = i - j;
      H(i, j) = k == 0 ? scale * units::pi * units::pi / 3.0
                       : scale * ((k % 2 == 0) ? 2.0 : -2.0) / (double(k) * k);
    }
    H(i, i) += morse(out.grid[i] - m.center, m.depth, m.range) + m.depth;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H);
  if (solver.info() != Eigen::Success) throw Error("DVR eigendecomposition failed");
  out.energies = solver.eigenvalues().head(n_levels);
  out.vectors = solver.eigenvectors().leftCols(n_levels);
  // Fix the arbitrary sign: positive amplitude at the largest-|c| point.
  for (int v = 0; v < n_levels; ++v) {
    Eigen::Index imax;
    out.vectors.col(v).cwiseAbs().maxCoeff(&imax);
    if (out.vectors(imax, v) < 0.0) out.vectors.col(v) *= -1.0;
  }
  return out;
}

bool WignerTable::contains(double r, double p) const {
  return r >= R0 && r <= R_end() && p >= P0 && p <= P_end();
}

double WignerTable::value(double r, double p) const {
  if (!contains(r, p)) return 0.0;
  const double u = (r - R0) / dR;
  const double v = (p - P0) / dP;
  const int i = std::min(static_cast<int>(u), n_R - 2);
  const int j = std::min(static_cast<int>(v), n_P - 2);
  const double fu = u - i;
  const double fv = v - j;
  return (1.0 - fu) * ((1.0 - fv) * at(i, j) + fv * at(i, j + 1)) +
         fu * ((1.0 - fv) * at(i + 1, j) + fv * at(i + 1, j + 1));
}

double WignerTable::marginal(int i) const {
  double s = 0.0;
  for (int j = 0; j < n_P; ++j) s += at(i, j);
  return s * dP;
}

double WignerTable::min_value() const { return *std::min_element(W.begin(), W.end()); }

WignerTable build_wigner_table(const MorseEigenstates& states, int nu, const ModelParameters& p,
                               const WignerOptions& options) {
  if (nu < 0 || nu >= states.size())
    throw Error("Wigner table requested for nu=" + std::to_string(nu) + " but only " +
                std::to_string(states.size()) + " levels were computed");
  if (options.refine < 1) throw Error("Wigner refine factor must be >= 1");
  const int n = static_cast<int>(states.grid.size());
  const double edge = std::max(std::abs(states.vectors(0, nu)), std::abs(states.vectors(n - 1, nu)));
  if (edge > options.edge_tolerance) {
    std::ostringstream msg;
    msg << "DVR grid too small for nu=" << nu << ": edge amplitude " << edge << " exceeds "
        << options.edge_tolerance;
    throw Error(msg.str());
  }

  WignerTable t;
  t.nu = nu;
  t.R0 = states.grid.front();
  t.dR = states.spacing / options.refine;
  t.n_R = (n - 1) * options.refine + 1;

  // psi on the half-spacing grid so that R +- s stays on it for s = j dR/2.
  const int n_half = 2 * (t.n_R - 1) + 1;
  std::vector<double> psi(n_half);
  for (int k = 0; k < n_half; ++k) psi[k] = states.wavefunction(nu, t.R0 + 0.5 * t.dR * k);

  // Momentum grid with period 2 pi / dR; any n_period > max shift index makes
  // sum_P cos(P j dR) vanish for every shift j != 0.
  const int n_period =
      std::max(t.n_R, static_cast<int>(std::ceil(units::two_pi / (t.dR * options.momentum_step))));
  t.dP = units::two_pi / (t.dR * n_period);
  const double p_cut = std::sqrt(2.0 * p.masses.reduced * states.energies(nu)) +
                       options.momentum_margin * std::sqrt(p.masses.reduced * morse_frequency(p));
  const int M = std::min(static_cast<int>(std::ceil(p_cut / t.dP)), (n_period - 1) / 2);
  t.n_P = 2 * M + 1;
  t.P0 = -M * t.dP;
  t.W.assign(static_cast<std::size_t>(t.n_R) * t.n_P, 0.0);

  std::vector<double> ctab(n_period), stab(n_period);
  for (int k = 0; k < n_period; ++k) {
    ctab[k] = std::cos(units::two_pi * k / n_period);
    stab[k] = std::sin(units::two_pi * k / n_period);
  }

  const double pref = t.dR / units::two_pi;
  double max_imag = 0.0;
#pragma omp parallel for schedule(static) reduction(max : max_imag)
  for (int a = 0; a < t.n_R; ++a) {
    const int c = 2 * a;
    const int J = std::min(c, n_half - 1 - c);
    for (int jp = 0; jp < t.n_P; ++jp) {
      const long m = jp - M;
      double re = psi[c] * psi[c];
      double im = 0.0;
      for (int j = 1; j <= J; ++j) {
        const double fwd = psi[c + j] * psi[c - j];
        const double bwd = psi[c - j] * psi[c + j];
        long k = (m * j) % n_period;
        if (k < 0) k += n_period;
        re += (fwd + bwd) * ctab[k];
        im += (fwd - bwd) * stab[k];
      }
      t.W[static_cast<std::size_t>(a) * t.n_P + jp] = pref * re;
      max_imag = std::max(max_imag, std::abs(pref * im));
    }
  }
  t.max_imaginary = max_imag;
  if (t.max_imaginary > 1e-10) throw Error("Wigner transform has a non-negligible imaginary part");

  double total = 0.0;
  for (int a = 0; a < t.n_R; ++a) {
    const double marg = t.marginal(a);
    total += marg;
    t.max_marginal_error = std::max(t.max_marginal_error, std::abs(marg - psi[2 * a] * psi[2 * a]));
  }
  t.norm = total * t.dR;
  return t;
}

std::string wigner_to_csv(const WignerTable& t) {
  std::string out = "R_angstrom,P_R_au,W\n";
  out.reserve(out.size() + static_cast<std::size_t>(t.n_R) * t.n_P * 40);
  for (int i = 0; i < t.n_R; ++i)
    for (int j = 0; j < t.n_P; ++j)
      out += io::format_double(units::to_angstrom(t.R(i))) + "," + io::format_double(t.P(j)) + "," +
             io::format_double(t.at(i, j)) + "\n";
  return out;
}

MetropolisResult metropolis_sample_wigner(const WignerTable& table, int n_samples,
                                          const MetropolisOptions& options, std::mt19937_64& rng) {
  if (n_samples < 0) throw Error("n_samples must be >= 0");
  if (options.thinning < 1 || options.burn_in < 0) throw Error("invalid Metropolis options");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Periodic box; the table is negligible near its edges so wrapping is harmless.
  const double LR = table.R_end() - table.R0;
  const double LP = table.P_end() - table.P0;
  std::size_t start = 0;
  for (std::size_t k = 1; k < table.W.size(); ++k)
    if (std::abs(table.W[k]) > std::abs(table.W[start])) start = k;
  double R = table.R(static_cast<int>(start / table.n_P));
  double P = table.P(static_cast<int>(start % table.n_P));
  double w = std::abs(table.value(R, P));

  double fraction = options.initial_step_fraction;
  auto propose = [&](long count) {
    long accepted = 0;
    for (long i = 0; i < count; ++i) {
      const double Rn = wrap(R + fraction * LR * (2.0 * uniform(rng) - 1.0), table.R0, LR);
      const double Pn = wrap(P + fraction * LP * (2.0 * uniform(rng) - 1.0), table.P0, LP);
      const double wn = std::abs(table.value(Rn, Pn));
      if (wn >= w || uniform(rng) * w < wn) {
        R = Rn;
        P = Pn;
        w = wn;
        ++accepted;
      }
    }
    return accepted;
  };

  for (int round = 0; round < options.tune_rounds; ++round) {
    const double a = double(propose(options.tune_proposals)) / options.tune_proposals;
    if (std::abs(a - 0.5) < 0.05) break;
    const double factor = std::clamp(a / std::max(1.0 - a, 1e-3), 0.5, 2.0);
    fraction = std::min(fraction * factor, 0.5);
  }
  propose(options.burn_in);

  MetropolisResult out;
  out.step_fraction = fraction;
  out.samples.reserve(n_samples);
  long accepted = 0;
  for (int s = 0; s < n_samples; ++s) {
    accepted += propose(options.thinning);
    out.samples.push_back({R, P, table.value(R, P) < 0.0 ? -1.0 : 1.0});
  }
  const long total = static_cast<long>(n_samples) * options.thinning;
  out.acceptance = total > 0 ? double(accepted) / total : 0.0;
  out.acceptance_in_range =
      out.acceptance >= options.target_low && out.acceptance <= options.target_high;
  if (total > 0 && (out.acceptance < 0.2 || out.acceptance > 0.8)) {
    std::ostringstream msg;
    msg << "Metropolis acceptance " << out.acceptance << " outside [0.2, 0.8] for nu=" << table.nu
        << " after tuning (step fraction " << fraction << ")";
    out.diagnostics = msg.str();
  }
  return out;
}

TranslationalOptions default_translational_options() {
  return {units::angstrom(5.0), units::per_angstrom2(4.544)};
}

double incoming_momentum(double E_i, const ModelParameters& p) {
  return -std::sqrt(2.0 * p.masses.total * E_i);
}

TranslationalSample sample_translational(double E_i, const ModelParameters& p,
                                         const TranslationalOptions& options, std::mt19937_64& rng) {
  if (!(E_i > 0.0)) throw Error("incident energy must be > 0");
  std::normal_distribution<double> z(options.Z_i, std::sqrt(1.0 / (2.0 * options.gamma_Z)));
  std::normal_distribution<double> pz(incoming_momentum(E_i, p), std::sqrt(options.gamma_Z / 2.0));
  TranslationalSample s;
  s.Z = z(rng);
  s.P_Z = pz(rng);
  return s;
}

ElectronicSample sample_electronic(const SystemModel& model, double gamma, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int dim = model.dimension();
  ElectronicSample s;
  s.x.resize(dim);
  s.p.resize(dim);
  s.occupations.assign(dim, 0);
  for (int k = 0; k < dim; ++k) {
    if (k > 0) s.occupations[k] = uniform(rng) <= fermi(model.band.energies[k - 1], model.params);
    const double theta = units::two_pi * uniform(rng);
    const double r = std::sqrt(2.0 * s.occupations[k] + gamma);
    s.x[k] = r * std::cos(theta);
    s.p[k] = r * std::sin(theta);
  }
  return s;
}

InitialConditionSampler::InitialConditionSampler(const SystemModel& model,
                                                 const WignerTable& table, double E_i,
                                                 int n_trajectories, std::uint64_t seed,
                                                 const SamplingOptions& options)
    : model_(model), E_i_(E_i), seed_(seed), options_(options) {
  if (!(E_i > 0.0)) throw Error("incident energy must be > 0");
  auto rng = make_rng(seed, 0, 0);
  chain_ = metropolis_sample_wigner(table, n_trajectories, options.metropolis, rng);
}

SampledInitialCondition InitialConditionSampler::draw(long index) const {
  if (index < 0 || index >= static_cast<long>(chain_.samples.size()))
    throw Error("initial condition index out of range");
  auto rng = make_rng(seed_, 1, static_cast<std::uint64_t>(index));
  const auto tr = sample_translational(E_i_, model_.params, options_.translation, rng);
  auto el = sample_electronic(model_, options_.gamma, rng);
  const auto& vib = chain_.samples[index];

  SampledInitialCondition ic;
  ic.weight = vib.sign;
  ic.state.R = vib.R;
  ic.state.P_R = vib.P;
  ic.state.Z = tr.Z;
  ic.state.P_Z = tr.P_Z;
  ic.state.x = std::move(el.x);
  ic.state.p = std::move(el.p);
  double n_e = 0.0;
  for (auto o : el.occupations) n_e += o;
  ic.state.n_electrons = n_e;
  ic.occupations = std::move(el.occupations);
  return ic;
}

}  // namespace nah
