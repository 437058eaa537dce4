#include "nah/ensemble_runner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <optional>
#include <set>

#include <omp.h>

#include "nah/config.hpp"
#include "nah/io.hpp"
#include "nah/units.hpp"

namespace nah {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error("run config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error("run config: unknown key '" + where + key + "'");
}

double num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw Error(std::string("run config: '") + key + "' must be a number");
  return j.at(key).get<double>();
}

long integer(const json& j, const char* key, long fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw Error(std::string("run config: '") + key + "' must be an integer");
  return v.get<long>();
}

template <class T>
std::vector<T> scalar_or_list(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("run config: missing key '") + key + "'");
  const auto& v = j.at(key);
  std::vector<T> out;
  auto one = [&](const json& e) {
    if constexpr (std::is_integral_v<T>) {
      if (!e.is_number_integer())
        throw Error(std::string("run config: '") + key + "' must hold integers");
    } else if (!e.is_number()) {
      throw Error(std::string("run config: '") + key + "' must hold numbers");
    }
    out.push_back(e.get<T>());
  };
  if (v.is_array())
    for (const auto& e : v) one(e);
  else
    one(v);
  if (out.empty()) throw Error(std::string("run config: '") + key + "' is empty");
  return out;
}

struct Outcome {
  TrajectoryRecord record;
  std::optional<TrajectoryObservables> observables;
  double weight = 1.0;
  bool failed = false;
};

constexpr std::uint64_t checkpoint_magic = 0x4e4148434b505431ULL;

std::string checkpoint_bytes(const std::string& digest, long next_block,
                             const EnsembleAccumulator& acc) {
  std::string out;
  out.append(reinterpret_cast<const char*>(&checkpoint_magic), sizeof checkpoint_magic);
  out.append(digest);
  const auto nb = static_cast<std::int64_t>(next_block);
  out.append(reinterpret_cast<const char*>(&nb), sizeof nb);
  out.append(acc.serialize());
  return out;
}

std::optional<std::pair<long, EnsembleAccumulator>> read_checkpoint(const fs::path& path,
                                                                    const std::string& digest) {
  if (!fs::exists(path)) return std::nullopt;
  const std::string bytes = io::read_file(path);
  const std::size_t head = sizeof(std::uint64_t) + digest.size() + sizeof(std::int64_t);
  std::uint64_t magic = 0;
  if (bytes.size() < head || (std::memcpy(&magic, bytes.data(), sizeof magic), magic) != checkpoint_magic)
    throw Error("corrupt checkpoint " + path.string());
  if (bytes.compare(sizeof magic, digest.size(), digest) != 0)
    throw Error("checkpoint " + path.string() + " belongs to a different configuration");
  std::int64_t next = 0;
  std::memcpy(&next, bytes.data() + sizeof magic + digest.size(), sizeof next);
  return std::make_pair(static_cast<long>(next),
                        EnsembleAccumulator::deserialize(bytes.substr(head)));
}

std::string format_energy_dir(double E_i) { return io::format_double(units::to_eV(E_i)); }

void log_line(const RunOptions& o, const std::string& s) {
  if (o.log) o.log(s);
}

}  // namespace

void RunConfig::validate() const {
  if (nu_i.empty()) throw Error("run config: nu_i is empty");
  for (int v : nu_i)
    if (v < 0) throw Error("run config: nu_i must be >= 0 (got " + std::to_string(v) + ")");
  if (E_i.empty()) throw Error("run config: E_i_eV is empty");
  for (double e : E_i)
    if (!(e > 0.0)) throw Error("run config: E_i_eV values must be > 0");
  if (n_trajectories < 1) throw Error("run config: n_trajectories must be >= 1");
  if (n_workers < 0) throw Error("run config: n_workers must be >= 0");
  if (block_size < 1) throw Error("run config: block_size must be >= 1");
  if (band_N < 0) throw Error("run config: band_N must be >= 0");
  if (!(plateau_fraction > 0.0 && plateau_fraction <= 1.0))
    throw Error("run config: plateau_fraction must be in (0, 1]");
  if (extra_vib_levels < 0) throw Error("run config: extra_vib_levels must be >= 0");
  if (sampling.metropolis.thinning < 1 || sampling.metropolis.burn_in < 0)
    throw Error("run config: invalid Metropolis burn-in or thinning");
  if (sampling.dvr.n_points < 3 || !(sampling.dvr.R_max > sampling.dvr.R_min))
    throw Error("run config: invalid DVR grid");
  if (sampling.wigner.refine < 1) throw Error("run config: wigner_refine must be >= 1");
  if (!(sampling.translation.gamma_Z > 0.0)) throw Error("run config: gamma_Z must be > 0");
  if (sampling.gamma < 0.0) throw Error("run config: gamma must be >= 0");
  integrator.validate();
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, "",
             {"model_file", "nu_i", "E_i_eV", "n_trajectories", "seed", "output_dir", "n_workers",
              "block_size", "band_N", "integrator", "sampling", "analysis", "description"});
  RunConfig c;
  if (!j.contains("model_file") || !j.at("model_file").is_string())
    throw Error("run config: 'model_file' (string) is required");
  c.model_file = fs::path(j.at("model_file").get<std::string>());
  if (c.model_file.is_relative()) c.model_file = base_dir / c.model_file;
  c.nu_i = scalar_or_list<int>(j, "nu_i");
  for (double e : scalar_or_list<double>(j, "E_i_eV")) c.E_i.push_back(units::eV(e));
  if (!j.contains("n_trajectories")) throw Error("run config: 'n_trajectories' is required");
  c.n_trajectories = integer(j, "n_trajectories", 0);
  if (!j.contains("seed") || !j.at("seed").is_number_unsigned())
    throw Error("run config: 'seed' (non-negative integer) is required");
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  c.n_workers = static_cast<int>(integer(j, "n_workers", 0));
  c.block_size = static_cast<int>(integer(j, "block_size", 32));
  c.band_N = static_cast<int>(integer(j, "band_N", 0));

  if (j.contains("integrator")) {
    const auto& g = j.at("integrator");
    check_keys(g, "integrator.",
               {"dt_fs", "t_max_fs", "energy_tol", "R_min_bohr", "R_max_bohr", "electronic_substeps",
                "scheme", "record_stride_fs", "early_stop", "Z_detect_angstrom", "coupling_cutoff",
                "plateau_window_fs", "plateau_slope_per_fs"});
    auto& ic = c.integrator;
    ic.dt = units::fs(num(g, "dt_fs", units::to_fs(ic.dt)));
    ic.t_max = units::fs(num(g, "t_max_fs", units::to_fs(ic.t_max)));
    ic.energy_tol = num(g, "energy_tol", ic.energy_tol);
    ic.R_min = num(g, "R_min_bohr", ic.R_min);
    ic.R_max = num(g, "R_max_bohr", ic.R_max);
    ic.electronic_substeps = static_cast<int>(integer(g, "electronic_substeps", 1));
    if (g.contains("scheme")) {
      const auto s = g.at("scheme").get<std::string>();
      if (s == "split")
        ic.scheme = ElectronicScheme::split;
      else if (s == "exact")
        ic.scheme = ElectronicScheme::exact;
      else
        throw Error("run config: integrator.scheme must be 'split' or 'exact'");
    }
    ic.record_stride = units::fs(num(g, "record_stride_fs", units::to_fs(ic.record_stride)));
    if (g.contains("early_stop")) ic.early_stop = g.at("early_stop").get<bool>();
    ic.Z_detect = units::angstrom(num(g, "Z_detect_angstrom", units::to_angstrom(ic.Z_detect)));
    ic.coupling_cutoff = num(g, "coupling_cutoff", ic.coupling_cutoff);
    ic.plateau_window = units::fs(num(g, "plateau_window_fs", units::to_fs(ic.plateau_window)));
    ic.plateau_slope = num(g, "plateau_slope_per_fs", ic.plateau_slope * units::fs(1.0)) /
                       units::fs(1.0);
  }
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    check_keys(s, "sampling.",
               {"dvr_R_min_angstrom", "dvr_R_max_angstrom", "dvr_points", "wigner_refine",
                "momentum_step_au", "momentum_margin_sqrt_mu_omega", "burn_in", "thinning", "Z_i_angstrom",
                "gamma_Z_per_angstrom2", "gamma"});
    auto& so = c.sampling;
    so.dvr.R_min = units::angstrom(num(s, "dvr_R_min_angstrom", units::to_angstrom(so.dvr.R_min)));
    so.dvr.R_max = units::angstrom(num(s, "dvr_R_max_angstrom", units::to_angstrom(so.dvr.R_max)));
    so.dvr.n_points = static_cast<int>(integer(s, "dvr_points", so.dvr.n_points));
    so.wigner.refine = static_cast<int>(integer(s, "wigner_refine", so.wigner.refine));
    so.wigner.momentum_step = num(s, "momentum_step_au", so.wigner.momentum_step);
    so.wigner.momentum_margin = num(s, "momentum_margin_sqrt_mu_omega", so.wigner.momentum_margin);
    so.metropolis.burn_in = static_cast<int>(integer(s, "burn_in", so.metropolis.burn_in));
    so.metropolis.thinning = static_cast<int>(integer(s, "thinning", so.metropolis.thinning));
    so.translation.Z_i =
        units::angstrom(num(s, "Z_i_angstrom", units::to_angstrom(so.translation.Z_i)));
    so.translation.gamma_Z = units::per_angstrom2(
        num(s, "gamma_Z_per_angstrom2",
            so.translation.gamma_Z / (units::bohr_angstrom * units::bohr_angstrom)));
    so.gamma = num(s, "gamma", so.gamma);
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    check_keys(a, "analysis.", {"plateau_fraction", "extra_vib_levels"});
    c.plateau_fraction = num(a, "plateau_fraction", c.plateau_fraction);
    c.extra_vib_levels = static_cast<int>(integer(a, "extra_vib_levels", c.extra_vib_levels));
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw Error("run config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["nu_i"] = c.nu_i;
  std::vector<double> e;
  for (double v : c.E_i) e.push_back(units::to_eV(v));
  j["E_i_eV"] = e;
  j["n_trajectories"] = c.n_trajectories;
  j["seed"] = c.seed;
  j["block_size"] = c.block_size;
  j["band_N"] = c.band_N;
  const auto& ic = c.integrator;
  j["integrator"] = {{"dt_fs", units::to_fs(ic.dt)},
                     {"t_max_fs", units::to_fs(ic.t_max)},
                     {"energy_tol", ic.energy_tol},
                     {"R_min_bohr", ic.R_min},
                     {"R_max_bohr", ic.R_max},
                     {"electronic_substeps", ic.electronic_substeps},
                     {"scheme", ic.scheme == ElectronicScheme::split ? "split" : "exact"},
                     {"record_stride_fs", units::to_fs(ic.record_stride)},
                     {"early_stop", ic.early_stop},
                     {"Z_detect_angstrom", units::to_angstrom(ic.Z_detect)},
                     {"coupling_cutoff", ic.coupling_cutoff},
                     {"plateau_window_fs", units::to_fs(ic.plateau_window)},
                     {"plateau_slope_per_fs", ic.plateau_slope * units::fs(1.0)}};
  const auto& so = c.sampling;
  j["sampling"] = {{"dvr_R_min_angstrom", units::to_angstrom(so.dvr.R_min)},
                   {"dvr_R_max_angstrom", units::to_angstrom(so.dvr.R_max)},
                   {"dvr_points", so.dvr.n_points},
                   {"wigner_refine", so.wigner.refine},
                   {"momentum_step_au", so.wigner.momentum_step},
                   {"momentum_margin_sqrt_mu_omega", so.wigner.momentum_margin},
                   {"burn_in", so.metropolis.burn_in},
                   {"thinning", so.metropolis.thinning},
                   {"Z_i_angstrom", units::to_angstrom(so.translation.Z_i)},
                   {"gamma_Z_per_angstrom2",
                    so.translation.gamma_Z / (units::bohr_angstrom * units::bohr_angstrom)},
                   {"gamma", so.gamma}};
  j["analysis"] = {{"plateau_fraction", c.plateau_fraction},
                   {"extra_vib_levels", c.extra_vib_levels}};
  return j;
}

fs::path cell_directory(const fs::path& output_dir, const CellSpec& cell) {
  return output_dir / std::to_string(cell.nu_i) / format_energy_dir(cell.E_i);
}

ModelParameters load_run_model(const RunConfig& cfg) {
  auto p = config::load_model(cfg.model_file);
  if (cfg.band_N > 0) p.band.n_states = cfg.band_N;
  p.validate();
  return p;
}

CellResult run_cell(const RunConfig& cfg, const ModelParameters& params, const CellSpec& cell,
                    const RunOptions& options) {
  cfg.validate();
  CellResult out;
  out.cell = cell;
  out.directory = cell_directory(cfg.output_dir, cell);
  const fs::path manifest_path = out.directory / "manifest.json";
  const fs::path checkpoint_path = out.directory / "checkpoints" / "state.bin";

  RunConfig cell_cfg = cfg;
  cell_cfg.nu_i = {cell.nu_i};
  cell_cfg.E_i = {cell.E_i};
  const json model_json = config::model_to_json(params);
  const json cfg_json = run_config_to_json(cell_cfg);
  const std::string digest = io::sha256_hex(cfg_json.dump() + "\n" + model_json.dump());

  if (options.write_outputs) {
    const bool has_manifest = fs::exists(manifest_path);
    const bool has_checkpoint = fs::exists(checkpoint_path);
    if (options.force) {
      fs::remove_all(out.directory);
    } else if (options.resume && has_manifest) {
      log_line(options, "cell " + out.directory.string() + " is already complete; nothing to do");
      out.completed = true;
      out.skipped = true;
      return out;
    } else if (!options.resume && (has_manifest || has_checkpoint)) {
      throw Error("output " + out.directory.string() +
                  " already exists; use --resume to continue or --force to overwrite");
    }
  }

  const SystemModel model(params);
  const Propagator propagator(model, cfg.integrator);
  const int n_vib = cell.nu_i + 1 + cfg.extra_vib_levels;
  const auto states = morse_eigenstates_dvr(params, cfg.sampling.dvr, n_vib);
  std::vector<WignerTable> tables;
  tables.reserve(n_vib);
  for (int nu = 0; nu < n_vib; ++nu)
    tables.push_back(build_wigner_table(states, nu, params, cfg.sampling.wigner));

  if (coupling_profile(cfg.sampling.translation.Z_i, params) >= 1e-3)
    log_line(options, "warning: coupling at the initial separation exceeds 1e-3 of its maximum");

  const std::uint64_t cell_seed =
      make_rng(cfg.seed, static_cast<std::uint64_t>(cell.nu_i), std::bit_cast<std::uint64_t>(cell.E_i))();
  const InitialConditionSampler sampler(model, tables[cell.nu_i], cell.E_i,
                                        static_cast<int>(cfg.n_trajectories), cell_seed,
                                        cfg.sampling);
  out.acceptance = sampler.vibrational_chain().acceptance;
  out.metropolis_diagnostics = sampler.vibrational_chain().diagnostics;
  if (!out.metropolis_diagnostics.empty()) log_line(options, "warning: " + out.metropolis_diagnostics);

  const SeriesLayout layout{model.n_states(), n_vib};
  const long n_records = cfg.integrator.n_records();
  const double record_dt = cfg.integrator.dt * static_cast<double>(cfg.integrator.record_every());
  EnsembleAccumulator acc(layout, n_records, record_dt);
  long block = 0;
  if (options.write_outputs && options.resume) {
    if (auto cp = read_checkpoint(checkpoint_path, digest)) {
      block = cp->first;
      acc = std::move(cp->second);
      log_line(options, "resuming " + out.directory.string() + " at block " + std::to_string(block));
    }
  }

  auto run_one = [&](long index, Outcome& o) {
    try {
      const auto ic = sampler.draw(index);
      o.weight = ic.weight;
      o.observables.emplace(layout, n_records, &tables, cfg.sampling.gamma);
      auto& obs = *o.observables;
      o.record = run_trajectory(ic.state, propagator,
                                [&obs](long r, double, const MappedState& s) { obs.record(r, s); });
      if (o.record.discard_reason == DiscardReason::none)
        obs.finalize(o.record.exit_record, cfg.plateau_fraction);
      o.record.times.clear();
      o.record.snapshots.clear();
    } catch (const std::exception&) {
      o.failed = true;
      o.observables.reset();
    }
  };

  const int workers = cfg.n_workers > 0 ? cfg.n_workers : omp_get_max_threads();
  const long n_blocks = (cfg.n_trajectories + cfg.block_size - 1) / cfg.block_size;
  long blocks_this_run = 0;
  for (; block < n_blocks; ++block) {
    const long begin = block * cfg.block_size;
    const long end = std::min(cfg.n_trajectories, begin + cfg.block_size);
    std::vector<Outcome> outcomes(static_cast<std::size_t>(end - begin));
    if (workers == 1) {
      for (long i = begin; i < end; ++i) run_one(i, outcomes[i - begin]);
    } else {
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
      for (long i = begin; i < end; ++i) run_one(i, outcomes[i - begin]);
    }
    for (auto& o : outcomes) {
      if (o.failed)
        acc.add_failed();
      else if (o.record.discard_reason != DiscardReason::none)
        acc.add_discarded(o.record);
      else
        acc.add(*o.observables, o.weight, o.record);
    }
    if (options.write_outputs)
      io::write_file_atomic(checkpoint_path, checkpoint_bytes(digest, block + 1, acc));
    ++blocks_this_run;
    if (options.stop_after_blocks >= 0 && blocks_this_run >= options.stop_after_blocks &&
        block + 1 < n_blocks)
      return out;
  }

  out.result = acc.result(cfg.integrator.Z_detect, cfg.plateau_fraction);
  out.completed = true;
  if (!options.write_outputs) return out;

  std::vector<std::pair<std::string, std::string>> files;
  for (int s = 0; s < layout.size(); ++s) {
    const bool length = s == SeriesLayout::bond_length || s == SeriesLayout::surface_distance;
    files.emplace_back("series_" + layout.name(s) + ".csv",
                       series_to_csv(out.result.series[s], length));
  }
  files.emplace_back("final_states.csv", final_states_to_csv(out.result.final_states));
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [name, body] : files) {
    io::write_file_atomic(out.directory / name, body);
    listing += io::sha256_hex(body) + "  " + name + "\n";
  }

  const auto& st = out.result.stats;
  json m;
  m["config"] = cfg_json;
  m["config_digest"] = digest;
  m["model"] = model_json;
  m["model_sha256"] = io::sha256_hex(model_json.dump());
  m["model_file"] = cfg.model_file.filename().string();
  m["seed"] = cfg.seed;
  m["cell_seed"] = cell_seed;
  m["nu_i"] = cell.nu_i;
  m["E_i_eV"] = units::to_eV(cell.E_i);
  m["N"] = model.n_states();
  m["n_vib_levels"] = n_vib;
  m["band_energies_eV"] = [&] {
    std::vector<double> e;
    for (double v : model.band.energies) e.push_back(units::to_eV(v));
    return e;
  }();
  m["counts"] = {{"trajectories", st.n_trajectories},
                 {"used", st.n_used},
                 {"discarded_energy", st.n_discarded_energy},
                 {"discarded_bond_range", st.n_discarded_bond},
                 {"failed", st.n_failed},
                 {"within_energy_tol", st.n_within_energy_tol}};
  m["diagnostics"] = {{"max_energy_drift", st.max_energy_drift},
                      {"max_electron_count_drift", st.max_electron_drift},
                      {"max_norm_drift", st.max_norm_drift},
                      {"sign_weight_sum", st.weight_sum},
                      {"abs_weight_sum", st.abs_weight_sum},
                      {"leaked_probability", st.leaked_probability},
                      {"metropolis_acceptance", out.acceptance},
                      {"metropolis_step_fraction", sampler.vibrational_chain().step_fraction},
                      {"exit_record", out.result.exit_index},
                      {"plateau_begin_fs", units::to_fs(record_dt * out.result.plateau_begin)},
                      {"plateau_end_fs", units::to_fs(record_dt * (out.result.plateau_end - 1))}};
  m["outputs"] = listing;
  m["content_digest"] = io::sha256_hex(listing);
  io::write_file_atomic(manifest_path, m.dump(2) + "\n");
  return out;
}

std::vector<CellResult> run_sweep(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto params = load_run_model(cfg);
  // Validate every cell before producing any output.
  const int bound = morse_bound_state_count(params);
  for (int nu : cfg.nu_i)
    if (nu + 1 + cfg.extra_vib_levels > bound)
      throw Error("nu_i=" + std::to_string(nu) + " plus " + std::to_string(cfg.extra_vib_levels) +
                  " extra levels exceeds the " + std::to_string(bound) + " bound Morse states");
  std::vector<CellResult> out;
  for (int nu : cfg.nu_i)
    for (double e : cfg.E_i) {
      log_line(options, "cell nu_i=" + std::to_string(nu) + " E_i=" + format_energy_dir(e) + " eV");
      out.push_back(run_cell(cfg, params, {nu, e}, options));
    }
  return out;
}

ConvergenceReport convergence_report(const RunConfig& cfg, ConvergenceAxis axis,
                                     const std::vector<double>& values, const RunOptions& options) {
  if (values.empty()) throw Error("convergence axis needs at least one value");
  ConvergenceReport report;
  report.axis = axis;
  report.cell = {cfg.nu_i.front(), cfg.E_i.front()};
  RunOptions opts = options;
  opts.write_outputs = false;
  for (double v : values) {
    RunConfig c = cfg;
    switch (axis) {
      case ConvergenceAxis::band_size:
        c.band_N = static_cast<int>(v);
        break;
      case ConvergenceAxis::n_trajectories:
        c.n_trajectories = static_cast<long>(v);
        break;
      case ConvergenceAxis::dt:
        c.integrator.dt = units::fs(v);
        break;
    }
    const auto params = load_run_model(c);
    log_line(options, "convergence point " + io::format_double(v));
    auto cell = run_cell(c, params, report.cell, opts);
    ConvergenceEntry e;
    e.value = v;
    e.final_states = cell.result.final_states;
    for (const auto& r : e.final_states) e.max_stderr = std::max(e.max_stderr, r.error);
    if (!report.entries.empty()) {
      const auto& prev = report.entries.back().final_states;
      for (std::size_t k = 0; k < prev.size() && k < e.final_states.size(); ++k)
        e.max_change =
            std::max(e.max_change, std::abs(e.final_states[k].probability - prev[k].probability));
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::string convergence_to_csv(const ConvergenceReport& report) {
  const char* axis = report.axis == ConvergenceAxis::band_size        ? "N"
                     : report.axis == ConvergenceAxis::n_trajectories ? "n_trajectories"
                                                                      : "dt_fs";
  std::string out = std::string(axis) + ",nu_f,probability,stderr,max_change_vs_previous\n";
  for (const auto& e : report.entries)
    for (const auto& r : e.final_states)
      out += io::format_double(e.value) + "," + std::to_string(r.nu_f) + "," +
             io::format_double(r.probability) + "," + io::format_double(r.error) + "," +
             io::format_double(e.max_change) + "\n";
  return out;
}

}  // namespace nah
