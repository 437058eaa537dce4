// nahsim: calibration, sampling diagnostics, ensemble runs and analysis for
// the two-diabat molecule/metal scattering model.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nah/calibration.hpp"
#include "nah/config.hpp"
#include "nah/ensemble_runner.hpp"
#include "nah/figures.hpp"
#include "nah/io.hpp"
#include "nah/phase_space_sampling.hpp"
#include "nah/units.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Validation failures before any work is done map to exit code 2.
struct UsageError : nah::Error {
  using nah::Error::Error;
};

template <class F>
auto validated(F&& f) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string cell; std::getline(ss, cell, ',');) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_integral_v<T>)
        out.push_back(static_cast<T>(std::stol(cell, &used)));
      else
        out.push_back(static_cast<T>(std::stod(cell, &used)));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError(std::string("invalid ") + what + " list '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void log(const std::string& s) { std::cerr << s << "\n"; }

struct Common {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int workers = 0;
};

// --- fit -------------------------------------------------------------------

struct FitArgs {
  std::string model;
  std::string reference;
  std::string gamma_bounds = "0,10";
  std::string band_sizes = "50,100,200";
  std::string output;
  std::string synthetic;
};

int cmd_fit(const FitArgs& a) {
  require_file(a.model, "model file");
  auto p = validated([&] { return nah::config::load_model(a.model); });
  if (!a.synthetic.empty()) {
    const auto ref = nah::synthetic_reference(p, nah::standard_slices(p));
    nah::io::write_file_atomic(a.synthetic, nah::config::reference_to_csv(ref));
    std::cout << "wrote " << ref.size() << " synthetic reference energies to " << a.synthetic << "\n";
    return 0;
  }
  if (a.reference.empty()) throw UsageError("fit needs --reference (or --synthetic-reference)");
  require_file(a.reference, "reference CSV");
  const auto ref = validated([&] { return nah::config::load_reference_csv(a.reference); });
  if (ref.size() < 2) throw UsageError("reference CSV needs at least 2 points");
  nah::FitOptions opt;
  const auto bounds = parse_list<double>(a.gamma_bounds, "gamma bounds");
  if (bounds.size() != 2 || !(bounds[0] >= 0.0) || !(bounds[1] > bounds[0]))
    throw UsageError("--gamma-bounds must be 'lo,hi' with 0 <= lo < hi (eV)");
  opt.gamma_min = nah::units::eV(bounds[0]);
  opt.gamma_max = nah::units::eV(bounds[1]);
  opt.band_sizes = parse_list<int>(a.band_sizes, "band size");
  for (int n : opt.band_sizes)
    if (n < 1) throw UsageError("band sizes must be >= 1");

  nah::FitResult r;
  try {
    r = nah::refit_gamma(ref, p, opt);
  } catch (const nah::FitError& e) {
    std::cerr << "error: " << e.what() << "\nGamma_eV,residual_eV2\n";
    for (const auto& [g, res] : e.residual_curve)
      std::cerr << nah::units::to_eV(g) << "," << res * nah::units::hartree_eV * nah::units::hartree_eV
                << "\n";
    return 1;
  }
  const double ev2 = nah::units::hartree_eV * nah::units::hartree_eV;
  json report;
  report["Gamma_eV"] = nah::units::to_eV(r.gamma);
  report["residual_eV2"] = r.residual * ev2;
  report["rms_eV"] = nah::units::to_eV(r.rms);
  report["convergence"] = json::array();
  std::cout << "Gamma = " << nah::units::to_eV(r.gamma) << " eV, rms residual "
            << nah::units::to_eV(r.rms) * 1e3 << " meV\n\nN,rms_residual_meV,max_deviation_meV\n";
  for (const auto& row : r.convergence) {
    report["convergence"].push_back({{"N", row.n_states},
                                     {"rms_residual_eV", nah::units::to_eV(row.rms_residual)},
                                     {"max_deviation_eV", nah::units::to_eV(row.max_deviation)}});
    std::cout << row.n_states << "," << nah::units::to_eV(row.rms_residual) * 1e3 << ","
              << nah::units::to_eV(row.max_deviation) * 1e3 << "\n";
  }
  report["model"] = nah::config::model_to_json(r.model);
  const fs::path out = a.output.empty() ? fs::path(a.model).replace_extension(".fit.json")
                                        : fs::path(a.output);
  nah::io::write_file_atomic(out, report.dump(2) + "\n");
  std::cout << "\nwrote " << out.string() << "\n";
  return 0;
}

// --- wigner ------------------------------------------------------------------

struct WignerArgs {
  std::string model;
  int nu = 0;
  std::string output;
};

int cmd_wigner(const WignerArgs& a) {
  require_file(a.model, "model file");
  const auto p = validated([&] { return nah::config::load_model(a.model); });
  if (a.nu < 0) throw UsageError("--nu must be >= 0");
  const int bound = nah::morse_bound_state_count(p);
  if (a.nu >= bound)
    throw UsageError("--nu " + std::to_string(a.nu) + " exceeds the bound-state limit nu <= " +
                     std::to_string(bound - 1));
  const auto states = nah::morse_eigenstates_dvr(p, nah::default_dvr_grid(), a.nu + 1);
  const auto t = nah::build_wigner_table(states, a.nu, p);
  std::cout << "nu=" << a.nu << " E=" << nah::units::to_eV(states.energies(a.nu))
            << " eV (analytic " << nah::units::to_eV(nah::morse_level_analytic(a.nu, p)) << ")\n"
            << "grid " << t.n_R << " x " << t.n_P << ", norm " << t.norm << ", max marginal error "
            << t.max_marginal_error << ", min W " << t.min_value() << "\n";
  if (!a.output.empty()) {
    nah::io::write_file_atomic(a.output, nah::wigner_to_csv(t));
    std::cout << "wrote " << a.output << "\n";
  }
  return 0;
}

// --- sample-check ------------------------------------------------------------

struct SampleArgs {
  std::string model;
  std::string nus = "0,3,11,16";
  long draws = 100000;
  double E_i_eV = 0.5;
};

int cmd_sample_check(const SampleArgs& a, const Common& c) {
  require_file(a.model, "model file");
  const auto p = validated([&] { return nah::config::load_model(a.model); });
  const auto nus = parse_list<int>(a.nus, "nu");
  if (a.draws < 1) throw UsageError("--draws must be >= 1");
  int max_nu = 0;
  for (int nu : nus) {
    if (nu < 0) throw UsageError("nu must be >= 0");
    max_nu = std::max(max_nu, nu);
  }
  if (max_nu >= nah::morse_bound_state_count(p)) throw UsageError("nu exceeds the bound-state limit");
  const std::uint64_t seed = c.seed_given ? c.seed : 1;
  bool ok = true;

  const auto states = nah::morse_eigenstates_dvr(p, nah::default_dvr_grid(), max_nu + 1);
  std::cout << "nu,acceptance,step_fraction,in_range\n";
  for (int nu : nus) {
    const auto t = nah::build_wigner_table(states, nu, p);
    auto rng = nah::make_rng(seed, 10, static_cast<std::uint64_t>(nu));
    const auto m = nah::metropolis_sample_wigner(t, 2000, {}, rng);
    std::cout << nu << "," << m.acceptance << "," << m.step_fraction << ","
              << (m.acceptance_in_range ? "yes" : "no") << "\n";
    ok = ok && m.acceptance_in_range;
  }

  const nah::SystemModel model(p);
  std::vector<double> occ(model.n_states(), 0.0);
  for (long d = 0; d < a.draws; ++d) {
    auto rng = nah::make_rng(seed, 11, static_cast<std::uint64_t>(d));
    const auto s = nah::sample_electronic(model, 0.0, rng);
    for (int k = 0; k < model.n_states(); ++k) occ[k] += s.occupations[k + 1];
  }
  double worst = 0.0;
  for (int k = 0; k < model.n_states(); ++k) {
    const double f = nah::fermi(model.band.energies[k], p);
    const double sigma = std::sqrt(std::max(f * (1.0 - f), 1e-300) / a.draws);
    const double z = f * (1.0 - f) > 0.0 ? std::abs(occ[k] / a.draws - f) / sigma
                                         : (occ[k] / a.draws == f ? 0.0 : INFINITY);
    worst = std::max(worst, z);
  }
  std::cout << "occupations: worst deviation " << worst << " sigma over " << model.n_states()
            << " levels\n";

  double zs = 0.0, zz = 0.0, ps = 0.0;
  const auto opt = nah::default_translational_options();
  const double E = nah::units::eV(a.E_i_eV);
  for (long d = 0; d < a.draws; ++d) {
    auto rng = nah::make_rng(seed, 12, static_cast<std::uint64_t>(d));
    const auto s = nah::sample_translational(E, p, opt, rng);
    zs += s.Z;
    zz += s.Z * s.Z;
    ps += s.P_Z;
  }
  const double zm = zs / a.draws;
  std::cout << "translation: <Z> = " << nah::units::to_angstrom(zm)
            << " A, Var(Z) = " << (zz / a.draws - zm * zm) * nah::units::bohr_angstrom * nah::units::bohr_angstrom
            << " A^2, <P_Z> = " << ps / a.draws << " au (centre " << nah::incoming_momentum(E, p)
            << ")\n";
  return ok ? 0 : 1;
}

// --- run / converge / analyze ------------------------------------------------

struct RunArgs {
  std::string config;
  std::string output;
  bool resume = false;
  bool force = false;
};

nah::RunConfig load_config(const std::string& path, const std::string& output, const Common& c) {
  require_file(path, "run config");
  auto cfg = validated([&] { return nah::load_run_config(path); });
  if (!output.empty()) cfg.output_dir = output;
  if (c.seed_given) cfg.seed = c.seed;
  if (c.workers > 0) cfg.n_workers = c.workers;
  require_file(cfg.model_file, "model file");
  validated([&] {
    const auto p = nah::load_run_model(cfg);
    for (int nu : cfg.nu_i)
      if (nu + 1 + cfg.extra_vib_levels > nah::morse_bound_state_count(p))
        throw UsageError("nu_i=" + std::to_string(nu) + " exceeds the bound-state limit");
    return 0;
  });
  return cfg;
}

int cmd_run(const RunArgs& a, const Common& c) {
  if (a.resume && a.force) throw UsageError("--resume and --force are mutually exclusive");
  auto cfg = load_config(a.config, a.output, c);
  if (cfg.output_dir.empty()) throw UsageError("no output directory (set output_dir or --output)");
  if (!a.resume && !a.force)
    for (int nu : cfg.nu_i)
      for (double e : cfg.E_i) {
        const auto dir = nah::cell_directory(cfg.output_dir, {nu, e});
        if (fs::exists(dir / "manifest.json") || fs::exists(dir / "checkpoints"))
          throw UsageError("output " + dir.string() +
                           " already exists; use --resume to continue or --force to overwrite");
      }
  nah::RunOptions opt;
  opt.resume = a.resume;
  opt.force = a.force;
  opt.log = log;
  const auto cells = nah::run_sweep(cfg, opt);
  bool any_failed = false;
  for (const auto& cell : cells) {
    if (cell.skipped) continue;
    const auto& st = cell.result.stats;
    std::cout << "nu_i=" << cell.cell.nu_i << " E_i=" << nah::units::to_eV(cell.cell.E_i)
              << " eV: used " << st.n_used << "/" << st.n_trajectories << ", discarded "
              << st.n_discarded_energy + st.n_discarded_bond << ", failed " << st.n_failed << "\n";
    for (const auto& r : cell.result.final_states)
      std::cout << "  P(" << r.nu_f << ") = " << r.probability << " +- " << r.error << "\n";
    if (st.n_used == 0) any_failed = true;
  }
  return any_failed ? 1 : 0;
}

struct ConvergeArgs {
  std::string config;
  std::string axis = "N";
  std::string values;
  std::string output;
};

int cmd_converge(const ConvergeArgs& a, const Common& c) {
  auto cfg = load_config(a.config, "", c);
  nah::ConvergenceAxis axis;
  if (a.axis == "N")
    axis = nah::ConvergenceAxis::band_size;
  else if (a.axis == "n_trajectories")
    axis = nah::ConvergenceAxis::n_trajectories;
  else if (a.axis == "dt")
    axis = nah::ConvergenceAxis::dt;
  else
    throw UsageError("--axis must be N, n_trajectories or dt");
  if (a.values.empty()) throw UsageError("--values is required");
  const auto values = parse_list<double>(a.values, "axis value");
  for (double v : values)
    if (!(v > 0.0)) throw UsageError("axis values must be > 0");

  if (axis == nah::ConvergenceAxis::band_size) {
    const auto p = nah::load_run_model(cfg);
    std::vector<int> sizes;
    for (double v : values) sizes.push_back(static_cast<int>(v));
    std::cout << "slice,E0_spread_meV\n";
    for (const auto& slice : nah::standard_slices(p)) {
      const auto curves = nah::band_size_curves(p, slice.points, sizes,
                                                nah::default_reference_geometry(), 0.0);
      std::cout << slice.name << "," << nah::units::to_eV(curves.max_spread()) * 1e3 << "\n";
    }
  }
  nah::RunOptions opt;
  opt.log = log;
  const auto report = nah::convergence_report(cfg, axis, values, opt);
  const auto csv = nah::convergence_to_csv(report);
  if (a.output.empty())
    std::cout << csv;
  else
    nah::io::write_file_atomic(a.output, csv);
  return 0;
}

struct AnalyzeArgs {
  std::string output;
  std::string figures;
};

int cmd_analyze(const AnalyzeArgs& a) {
  if (a.output.empty()) throw UsageError("--output (run directory) is required");
  bool found = false;
  if (fs::is_directory(a.output))
    for (const auto& e : fs::recursive_directory_iterator(a.output))
      if (e.path().filename() == "manifest.json") {
        found = true;
        break;
      }
  if (!found) throw UsageError("no manifest.json under " + a.output);
  const fs::path figures = a.figures.empty() ? fs::path(a.output) / "figures" : fs::path(a.figures);
  const auto summary = nah::analyze(a.output, figures);
  std::cout << "analyzed " << summary.n_cells << " cells; wrote " << summary.written.size()
            << " files to " << figures.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonadiabatic molecule/metal scattering with mapping trajectories.\n"
               "Config files use eV, angstrom, amu and fs; see README.md."};
  app.require_subcommand(1);
  // Global flags are accepted after the subcommand as well.
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Random seed (overrides the config file's seed)")
      ->each([&](const std::string&) { common.seed_given = true; });
  app.add_option("--workers", common.workers, "Worker threads; 1 runs the serial reference path")
      ->check(CLI::NonNegativeNumber);

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Refit Gamma (eV) against reference ground-state energies");
  f->add_option("--model", fit.model, "Model file (JSON)")->required();
  f->add_option("--reference", fit.reference, "CSV with R_angstrom,Z_angstrom,E_eV");
  f->add_option("--gamma-bounds", fit.gamma_bounds, "Search interval for Gamma in eV, 'lo,hi'");
  f->add_option("--band-sizes", fit.band_sizes, "Band sizes N for the convergence table");
  f->add_option("--output", fit.output, "Fit report path (default <model>.fit.json)");
  f->add_option("--synthetic-reference", fit.synthetic,
                "Write reference energies computed from the model itself and exit");

  WignerArgs wig;
  auto* w = app.add_subcommand("wigner", "Build and check the Wigner table of a Morse level");
  w->add_option("--model", wig.model, "Model file (JSON)")->required();
  w->add_option("--nu", wig.nu, "Vibrational quantum number");
  w->add_option("--output", wig.output, "CSV with R_angstrom,P_R_au,W");

  SampleArgs smp;
  auto* s = app.add_subcommand("sample-check", "Metropolis acceptance and sampling statistics");
  s->add_option("--model", smp.model, "Model file (JSON)")->required();
  s->add_option("--nu", smp.nus, "Comma-separated vibrational levels");
  s->add_option("--draws", smp.draws, "Electronic and translational draws");
  s->add_option("--E-i", smp.E_i_eV, "Incident energy for the translational check (eV)");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run every (nu_i, E_i) cell of a run config");
  r->add_option("--config", run.config, "Run config (JSON)")->required();
  r->add_option("--output", run.output, "Output directory (overrides output_dir)");
  r->add_flag("--resume", run.resume, "Continue from checkpoints; completed cells are skipped");
  r->add_flag("--force", run.force, "Overwrite existing outputs");

  ConvergeArgs conv;
  auto* c = app.add_subcommand("converge", "Final-state tables across N, trajectory count or dt");
  c->add_option("--config", conv.config, "Run config (JSON); its first cell is used")->required();
  c->add_option("--axis", conv.axis, "N | n_trajectories | dt");
  c->add_option("--values", conv.values, "Comma-separated axis values (dt in fs)");
  c->add_option("--band-sizes", conv.values, "Alias of --values for --axis N");
  c->add_option("--output", conv.output, "CSV path (default stdout)");

  AnalyzeArgs an;
  auto* a = app.add_subcommand("analyze", "Figure-ready CSVs from a finished run");
  a->add_option("--output", an.output, "Run output directory");
  a->add_option("--figures-data", an.figures, "Directory for the CSVs (default <run>/figures)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*f) return cmd_fit(fit);
    if (*w) return cmd_wigner(wig);
    if (*s) return cmd_sample_check(smp, common);
    if (*r) return cmd_run(run, common);
    if (*c) return cmd_converge(conv, common);
    if (*a) return cmd_analyze(an);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
