// nah_acceptance: evaluates the nine acceptance criteria of the simulator and
// prints one PASS/FAIL line per criterion, followed by the measured numbers.
//
// Usage: nah_acceptance --workdir DIR [--known-deviations 7,8] [--criteria 1,5]
//
// Exit status is 0 unless a criterion fails that is not listed as a known
// deviation. Run directories of the ensemble criteria are kept under DIR.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/math/distributions/normal.hpp>
#include <omp.h>

#include "nah/calibration.hpp"
#include "nah/config.hpp"
#include "nah/ensemble_runner.hpp"
#include "nah/figures.hpp"
#include "nah/io.hpp"
#include "nah/units.hpp"

using std::filesystem::path;
namespace filesystem = std::filesystem;
using namespace nah;
using namespace nah::units;

namespace {

path source_dir() { return NAH_SOURCE_DIR; }
path model_path() { return source_dir() / "data" / "no_au111_standin.json"; }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) { std::cerr << "  " << s << "\n"; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Production-style config for one (nu_i, E_i) cell of the shipped model.
RunConfig production(const path& out, int nu_i, std::vector<double> E_eV, long n) {
  RunConfig c;
  c.model_file = model_path();
  c.nu_i = {nu_i};
  for (double e : E_eV) c.E_i.push_back(eV(e));
  c.n_trajectories = n;
  c.seed = 20240611;
  c.output_dir = out;
  c.n_workers = 0;
  c.block_size = 32;
  // The slowest packet (0.125 eV) needs about 900 fs to leave the surface.
  c.integrator.t_max = fs(1000.0);
  return c;
}

RunOptions fresh() {
  RunOptions o;
  o.force = true;
  o.log = [](const std::string& s) { note(s); };
  return o;
}

CellResult run_logged(const RunConfig& cfg, const ModelParameters& p, const CellSpec& cell,
                      const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  note(fmt("running nu_i=%d E_i=%g eV, %ld trajectories, N=%d", cell.nu_i, to_eV(cell.E_i),
           cfg.n_trajectories, p.band.n_states));
  auto r = run_cell(cfg, p, cell, opt);
  note(fmt("  done in %.0f s", seconds_since(t0)));
  return r;
}

// --- shared production cells (criteria 1, 2 and 7) ---------------------------

struct ProductionCells {
  std::vector<CellResult> cells;  // E_i = 0.125, 0.25, 0.5, 1.0 eV
  std::vector<double> seconds;
};

const std::vector<double> production_energies{0.125, 0.25, 0.5, 1.0};

ProductionCells& production_cells(const path& workdir) {
  static std::optional<ProductionCells> cache;
  if (cache) return *cache;
  cache.emplace();
  const auto cfg = production(workdir / "nu3", 3, production_energies, 2000);
  const auto p = load_run_model(cfg);
  for (double e : production_energies) {
    const auto t0 = std::chrono::steady_clock::now();
    cache->cells.push_back(run_logged(cfg, p, {3, eV(e)}, fresh()));
    cache->seconds.push_back(seconds_since(t0));
  }
  analyze(workdir / "nu3", workdir / "nu3" / "figures");
  return *cache;
}

// --- 1 -------------------------------------------------------------------------

Verdict energy_conservation(const path& workdir) {
  auto& pc = production_cells(workdir);
  const auto& st = pc.cells[2].result.stats;  // 0.5 eV
  const double within = static_cast<double>(st.n_within_energy_tol) / st.n_trajectories;
  const long dropped = st.n_discarded_energy + st.n_discarded_bond + st.n_failed;
  const double discard = static_cast<double>(dropped) / st.n_trajectories;
  const double secs = pc.seconds[2];
  Verdict v;
  v.pass = within >= 0.999 && discard < 0.001 && secs < 1800.0;
  v.detail = fmt("%ld/%ld within 1e-3 (%.4f%%), %ld discarded or failed (%.3f%%), "
                 "max drift %.2e, %.0f s on %d threads",
                 st.n_within_energy_tol, st.n_trajectories, 100.0 * within, dropped,
                 100.0 * discard, st.max_energy_drift, secs, omp_get_max_threads());
  return v;
}

// --- 2 -------------------------------------------------------------------------

Verdict conservation_laws(const path& workdir) {
  auto& pc = production_cells(workdir);
  double ne = 0.0, norm = 0.0;
  for (const auto& c : pc.cells) {
    ne = std::max(ne, c.result.stats.max_electron_drift);
    norm = std::max(norm, c.result.stats.max_norm_drift);
  }

  // Decoupled metal: every population series must stay at its t = 0 value.
  auto cfg = production(workdir / "decoupled", 3, {1.0}, 64);
  cfg.integrator.t_max = fs(400.0);
  auto p = load_run_model(cfg);
  p.coupling.gamma = 0.0;
  const auto cell = run_logged(cfg, p, {3, eV(1.0)}, fresh());
  const auto& r = cell.result;
  double worst = 0.0;
  for (int s = SeriesLayout::anion; s < r.layout.vib(0); ++s) {
    const auto& v = r.get(s).values;
    for (double x : v) worst = std::max(worst, std::abs(x - v.front()));
  }
  Verdict v;
  v.pass = ne < 1e-8 && norm < 1e-8 && worst < 1e-10;
  v.detail = fmt("max N_e drift %.2e, max sum(x^2+p^2) drift %.2e over %ld trajectories; "
                 "V_k = 0: max population change %.2e",
                 ne, norm, 4 * pc.cells[0].result.stats.n_trajectories, worst);
  return v;
}

// --- 3 -------------------------------------------------------------------------

Verdict sampling(const path&) {
  const auto p = config::load_model(model_path());
  Verdict v;
  v.pass = true;
  std::ostringstream d;

  const auto st = morse_eigenstates_dvr(p, default_dvr_grid(), 21);
  double worst_level = 0.0;
  for (int nu = 0; nu <= 20; ++nu) {
    const double a = morse_level_analytic(nu, p);
    worst_level = std::max(worst_level, std::abs(st.energies(nu) - a) / std::abs(a));
  }
  v.pass = v.pass && worst_level <= 1e-4;
  d << fmt("(a) DVR max rel error %.2e", worst_level);

  double worst_norm = 0.0, worst_marg = 0.0;
  std::string acc;
  for (int nu : {0, 3, 11, 16}) {
    const auto t = build_wigner_table(st, nu, p);
    worst_norm = std::max(worst_norm, std::abs(t.norm - 1.0));
    worst_marg = std::max(worst_marg, t.max_marginal_error);
    auto rng = make_rng(1, 0, nu);
    const auto chain = metropolis_sample_wigner(t, 2000, MetropolisOptions{}, rng);
    v.pass = v.pass && chain.acceptance >= 0.4 && chain.acceptance <= 0.6;
    acc += fmt(" %d:%.3f", nu, chain.acceptance);
  }
  v.pass = v.pass && worst_norm <= 1e-6 && worst_marg <= 1e-6;
  d << fmt("; (b) |norm-1| %.1e, marginal error %.1e", worst_norm, worst_marg);
  d << "; (c) acceptance" << acc;

  // Per-level occupations against f(e_k). With 100 levels a handful of 3 sigma
  // excursions is expected by chance; the count is compared with that
  // expectation and no level may sit beyond 4.5 sigma.
  const SystemModel m(p);
  const int n = 100000;
  std::vector<double> hits(m.dimension(), 0.0);
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < n; ++i) {
    const auto s = sample_electronic(m, 0.0, rng);
    for (int k = 1; k < m.dimension(); ++k) hits[k] += s.occupations[k];
  }
  int beyond3 = 0;
  double worst_z = 0.0;
  for (int k = 1; k <= m.n_states(); ++k) {
    const double f = fermi(m.band.energies[k - 1], p);
    const double sigma = std::sqrt(f * (1.0 - f) / n);
    const double dev = std::abs(hits[k] / n - f);
    if (sigma == 0.0) {
      if (dev > 0.0) beyond3 += 1000;
      continue;
    }
    worst_z = std::max(worst_z, dev / sigma);
    if (dev > 3.0 * sigma) ++beyond3;
  }
  v.pass = v.pass && beyond3 <= 2 && worst_z <= 4.5;
  d << fmt("; (d) %d/%d levels beyond 3 sigma (chance expectation 0.27), largest %.2f sigma",
           beyond3, m.n_states(), worst_z);
  v.detail = d.str();
  return v;
}

// --- 4 -------------------------------------------------------------------------

Verdict forces_and_integrator(const path&) {
  const auto p = config::load_model(model_path());
  const SystemModel m(p);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    MappedState s;
    s.R = angstrom(1.15 + 0.2 * u(rng));
    s.Z = angstrom(2.0 + 1.0 * u(rng));
    s.P_R = 10.0 * u(rng);
    s.P_Z = 30.0 * u(rng);
    s.x.resize(m.dimension());
    s.p.resize(m.dimension());
    for (int k = 0; k < m.dimension(); ++k) {
      s.x[k] = u(rng);
      s.p[k] = u(rng);
    }
    s.n_electrons = 0.5 * m.n_states();
    const auto d = forces(s, m);
    auto fd = [&](auto apply) {
      auto a = s, b = s;
      apply(a, h);
      apply(b, -h);
      return (h_sym(a, m) - h_sym(b, m)) / (2 * h);
    };
    auto compare = [&](double analytic, double numeric) {
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-3));
    };
    compare(d.dP_R, -fd([](MappedState& t, double e) { t.R += e; }));
    compare(d.dP_Z, -fd([](MappedState& t, double e) { t.Z += e; }));
    compare(d.dR, fd([](MappedState& t, double e) { t.P_R += e; }));
    compare(d.dZ, fd([](MappedState& t, double e) { t.P_Z += e; }));
    for (int k = 0; k < m.dimension(); ++k) {
      compare(d.dp[k], -fd([k](MappedState& t, double e) { t.x[k] += e; }));
      compare(d.dx[k], fd([k](MappedState& t, double e) { t.p[k] += e; }));
    }
  }

  // Energy drift of one sampled trajectory through the interaction region.
  const auto states = morse_eigenstates_dvr(p, default_dvr_grid(), 4);
  const auto table = build_wigner_table(states, 3, p);
  const InitialConditionSampler sampler(m, table, eV(0.5), 1, 7, SamplingOptions{});
  const auto s0 = sampler.draw(0).state;
  auto drift = [&](double dt_fs) {
    auto cfg = default_integrator_config();
    cfg.dt = fs(dt_fs);
    cfg.t_max = fs(600.0);
    cfg.energy_tol = 1.0;
    cfg.early_stop = false;
    return run_trajectory(s0, Propagator(m, cfg)).max_energy_drift;
  };
  const double coarse = drift(0.03), fine = drift(0.015);
  const double ratio = coarse / fine;
  Verdict v;
  v.pass = worst <= 1e-5 && ratio > 3.0 && ratio < 5.0;
  v.detail = fmt("max rel force error %.2e over 50 states; energy drift %.2e (dt 0.03 fs) vs "
                 "%.2e (dt 0.015 fs), ratio %.2f",
                 worst, coarse, fine, ratio);
  return v;
}

// --- 5 -------------------------------------------------------------------------

Verdict self_overlap(const path& workdir) {
  // P_{nu_i}(0) is held to 2 stderr. The orthogonality checks form a family of
  // n_vib - 1 comparisons, so each uses the Bonferroni bound that keeps the
  // family at the same 95% confidence as a single 2 stderr test.
  Verdict v;
  v.pass = true;
  std::ostringstream d;
  for (int nu_i : {0, 3}) {
    auto cfg = production(workdir / "t0", nu_i, {0.5}, 20000);
    cfg.integrator.t_max = cfg.integrator.record_stride;
    cfg.integrator.early_stop = false;
    const auto p = load_run_model(cfg);
    const auto cell = run_logged(cfg, p, {nu_i, eV(0.5)}, fresh());
    const auto& r = cell.result;
    const int others = r.layout.n_vib - 1;
    const boost::math::normal normal;
    const double family_z = boost::math::quantile(normal, 1.0 - 0.0455 / (2.0 * others));
    double worst_z = 0.0;
    int worst_nu = 0;
    for (int nu = 0; nu < r.layout.n_vib; ++nu) {
      if (nu == nu_i) continue;
      const auto& s = r.get(r.layout.vib(nu));
      const double z = std::abs(s.values[0]) / s.errors[0];
      if (z > worst_z) {
        worst_z = z;
        worst_nu = nu;
      }
    }
    const auto& own = r.get(r.layout.vib(nu_i));
    const double own_z = std::abs(own.values[0] - 1.0) / own.errors[0];
    v.pass = v.pass && own_z <= 2.0 && worst_z <= family_z;
    d << fmt("%snu_i=%d: P_%d(0) = %.4f +- %.4f (%.2f stderr); other levels at most %.2f stderr "
             "(nu_f=%d, family bound %.2f for %d levels)",
             nu_i == 0 ? "" : "; ", nu_i, nu_i, own.values[0], own.errors[0], own_z, worst_z,
             worst_nu, family_z, others);
  }
  v.detail = d.str();
  return v;
}

// --- 6 -------------------------------------------------------------------------

Verdict calibration(const path&) {
  const auto p = config::load_model(model_path());
  const auto reference = synthetic_reference(p, standard_slices(p));
  auto start = p;
  start.coupling.gamma = eV(1.0);
  FitOptions opt;
  opt.gamma_min = eV(0.5);
  opt.gamma_max = eV(8.0);
  opt.band_sizes = {50, 100, 200};
  const auto fit = refit_gamma(reference, start, opt);
  const double err = std::abs(to_eV(fit.gamma) - to_eV(p.coupling.gamma));

  double spread = 0.0;
  for (const auto& slice : standard_slices(p)) {
    const auto curves =
        band_size_curves(p, slice.points, {50, 100, 200}, default_reference_geometry(), 0.0);
    spread = std::max(spread, to_eV(curves.max_spread()));
  }
  Verdict v;
  v.pass = std::abs(to_eV(p.coupling.gamma) - 3.5) < 1e-12 && std::abs(to_eV(p.band.width) - 7.0) < 1e-12 &&
           err <= 0.01 &&
           spread < 0.010;
  v.detail = fmt("Gamma recovered %.6f eV (|error| %.1e eV) at DeltaE = %.1f eV; E0 spread "
                 "across N = 50, 100, 200 at most %.2f meV",
                 to_eV(fit.gamma), err, to_eV(p.band.width), 1e3 * spread);
  return v;
}

// --- 7 -------------------------------------------------------------------------

struct Extremum {
  double value = 0.0;
  double error = 0.0;
};

Extremum series_extremum(const ObservableSeries& s, bool maximum) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.values.size(); ++i)
    if (maximum ? s.values[i] > s.values[best] : s.values[i] < s.values[best]) best = i;
  return {s.values[best], s.errors[best]};
}

/// Strict monotonicity beyond the combined 1 sigma error of each neighbour pair.
bool monotone(const std::vector<Extremum>& v, bool increasing) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double step = increasing ? v[i + 1].value - v[i].value : v[i].value - v[i + 1].value;
    if (!(step > std::hypot(v[i].error, v[i + 1].error))) return false;
  }
  return true;
}

std::string row(const char* name, const std::vector<Extremum>& v, double scale = 1.0) {
  std::string s = std::string(name) + " [";
  for (std::size_t i = 0; i < v.size(); ++i)
    s += fmt("%s%.3f+-%.3f", i ? ", " : "", v[i].value * scale, v[i].error * scale);
  return s + "]";
}

Verdict qualitative_trends(const path& workdir) {
  auto& pc = production_cells(workdir);
  std::vector<Extremum> p3, p2, p1, anion, zmin;
  for (const auto& c : pc.cells) {
    const auto& fs_ = c.result.final_states;
    p3.push_back({fs_[3].probability, fs_[3].error});
    p2.push_back({fs_[2].probability, fs_[2].error});
    p1.push_back({fs_[1].probability, fs_[1].error});
    anion.push_back(series_extremum(c.result.get(SeriesLayout::anion), true));
    zmin.push_back(series_extremum(c.result.get(SeriesLayout::surface_distance), false));
  }
  const bool a3 = monotone(p3, false), a2 = monotone(p2, true), a1 = monotone(p1, true);
  const bool b = monotone(anion, true), c = monotone(zmin, false);
  Verdict v;
  v.pass = a3 && a2 && a1 && b && c;
  v.detail = fmt("(a) P3 decreasing %s, P2 increasing %s, P1 increasing %s; (b) %s; (c) %s",
                 a3 ? "yes" : "no", a2 ? "yes" : "no", a1 ? "yes" : "no",
                 b ? "peak anion increasing" : "peak anion NOT increasing",
                 c ? "closest approach decreasing" : "closest approach NOT decreasing") +
             "\n    E_i = 0.125, 0.25, 0.5, 1.0 eV: " + row("P3", p3) + " " + row("P2", p2) +
             " " + row("P1", p1) + "\n    " + row("peak NO-", anion) + " " +
             row("min Z (A)", zmin, bohr_angstrom);
  return v;
}

// --- 8 -------------------------------------------------------------------------

Verdict mechanism(const path& workdir) {
  const auto cfg = production(workdir / "nu16", 16, {1.0}, 400);
  const auto p = load_run_model(cfg);
  const auto cell = run_logged(cfg, p, {16, eV(1.0)}, fresh());
  analyze(workdir / "nu16", workdir / "nu16" / "figures");
  const auto& r = cell.result;
  const SystemModel m(p);
  const auto& z = r.get(SeriesLayout::surface_distance).values;
  const long turn = std::min_element(z.begin(), z.end()) - z.begin();
  const long last = static_cast<long>(z.size()) - 1;

  double near = 0.0, total = 0.0, above_turn = 0.0, above_end = 0.0, above_var = 0.0;
  for (int k = 1; k <= m.n_states(); ++k) {
    const auto& s = r.get(r.layout.metal(k));
    const double change = std::abs(s.values[last] - s.values[0]);
    total += change;
    const double e = m.band.energies[k - 1] - p.band.mu;
    if (std::abs(e) <= eV(0.5)) near += change;
    if (e > 0.0) {
      above_turn += s.values[turn];
      above_end += s.values[last];
      above_var += s.errors[turn] * s.errors[turn] + s.errors[last] * s.errors[last];
    }
  }
  const double fraction = near / total;
  const double back = above_end - above_turn;
  const double back_err = std::sqrt(above_var);
  Verdict v;
  v.pass = fraction >= 0.8 && back > 2.0 * back_err;
  v.detail = fmt("%.1f%% of sum|dP_k| within 0.5 eV of mu (needs 80%%); above-mu population "
                 "%+.3f +- %.3f between the Z turning point (%.0f fs) and %.0f fs",
                 100.0 * fraction, back, back_err,
                 to_fs(r.get(SeriesLayout::surface_distance).times[turn]),
                 to_fs(r.get(SeriesLayout::surface_distance).times[last]));
  return v;
}

// --- 9 -------------------------------------------------------------------------

std::map<std::string, std::string> cell_files(const path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[e.path().filename().string()] = io::read_file(e.path());
  return out;
}

Verdict determinism(const path& workdir) {
  auto base = production(workdir / "determinism", 3, {0.5}, 96);
  base.integrator.t_max = fs(300.0);
  base.band_N = 40;
  const auto p = load_run_model(base);
  const CellSpec cell{3, eV(0.5)};

  auto one = base;
  one.output_dir = workdir / "determinism" / "workers1";
  one.n_workers = 1;
  auto eight = base;
  eight.output_dir = workdir / "determinism" / "workers8";
  eight.n_workers = 8;
  auto cut = base;
  cut.output_dir = workdir / "determinism" / "resumed";
  cut.n_workers = 1;

  const auto a = run_logged(one, p, cell, fresh());
  const auto b = run_logged(eight, p, cell, fresh());
  auto stop = fresh();
  stop.stop_after_blocks = 1;
  run_logged(cut, p, cell, stop);
  auto resume = fresh();
  resume.force = false;
  resume.resume = true;
  const auto c = run_logged(cut, p, cell, resume);

  const auto fa = cell_files(a.directory), fb = cell_files(b.directory), fc = cell_files(c.directory);
  const bool workers_same = fa == fb;
  const bool resume_same = fa == fc;
  Verdict v;
  v.pass = workers_same && resume_same && fa.count("final_states.csv") == 1;
  v.detail = fmt("%zu CSV files compared; workers 1 vs 8 %s; resumed after 1 of %ld blocks %s",
                 fa.size(), workers_same ? "byte-identical" : "DIFFER",
                 (base.n_trajectories + base.block_size - 1) / base.block_size,
                 resume_same ? "byte-identical" : "DIFFERS");
  return v;
}

std::set<int> parse_set(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');)
    if (!cell.empty()) out.insert(std::stoi(cell));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria of the scattering simulator"};
  std::string workdir = "acceptance";
  std::string known = "";
  std::string only = "";
  app.add_option("--workdir", workdir, "Directory for run outputs");
  app.add_option("--known-deviations", known,
                 "Comma-separated criteria reported but not counted as failures");
  app.add_option("--criteria", only, "Comma-separated subset to evaluate (default all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict(const path&)>>> criteria{
      {"energy conservation", energy_conservation},
      {"conservation laws", conservation_laws},
      {"sampling correctness", sampling},
      {"force and integrator fidelity", forces_and_integrator},
      {"self-overlap and orthogonality", self_overlap},
      {"calibration", calibration},
      {"qualitative trends", qualitative_trends},
      {"mechanism diagnostic", mechanism},
      {"determinism", determinism},
  };
  const auto known_set = parse_set(known);
  const auto only_set = parse_set(only);
  filesystem::create_directories(workdir);

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only_set.empty() && !only_set.count(id)) continue;
    std::cerr << "criterion " << id << ": " << criteria[i].first << "\n";
    Verdict v;
    try {
      v = criteria[i].second(workdir);
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const bool excused = !v.pass && known_set.count(id);
    if (!v.pass && !excused) ++unexpected;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << ")" << (excused ? " [known deviation]" : "") << ": " << v.detail << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
