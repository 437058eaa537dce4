#include "nah/figures.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <json.hpp>

#include "nah/config.hpp"
#include "nah/io.hpp"
#include "nah/units.hpp"

namespace nah {

namespace fs = std::filesystem;

ContourGrid default_contour_grid() {
  return {units::angstrom(0.9), units::angstrom(2.4), 0.0, units::angstrom(5.0), 61, 101};
}

std::string hgap_contour_csv(const ModelParameters& p, const ContourGrid& g) {
  if (g.n_R < 2 || g.n_Z < 2) throw Error("contour grid needs at least 2 nodes per axis");
  std::string out = "R_angstrom,Z_angstrom,h_gap_eV\n";
  for (int i = 0; i < g.n_R; ++i) {
    const double R = g.R_min + (g.R_max - g.R_min) * i / (g.n_R - 1);
    for (int k = 0; k < g.n_Z; ++k) {
      const double Z = g.Z_min + (g.Z_max - g.Z_min) * k / (g.n_Z - 1);
      out += io::format_double(units::to_angstrom(R)) + "," +
             io::format_double(units::to_angstrom(Z)) + "," +
             io::format_double(units::to_eV(h_gap(R, Z, p))) + "\n";
    }
  }
  return out;
}

int Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("CSV has no column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

Table read_csv(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty CSV");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      double v = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (r.ec != std::errc()) throw Error(path.string() + ":" + std::to_string(lineno) + ": bad number");
      row.push_back(v);
    }
    if (row.size() != t.header.size())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

struct Cell {
  int nu_i;
  double E_i_eV;
  fs::path dir;
  nlohmann::json manifest;
};

std::string tag(const Cell& c) { return std::to_string(c.nu_i) + "_" + io::format_double(c.E_i_eV); }

}  // namespace

AnalyzeSummary analyze(const fs::path& run_dir, const fs::path& figures_dir) {
  std::vector<Cell> cells;
  if (fs::is_directory(run_dir))
    for (const auto& entry : fs::recursive_directory_iterator(run_dir))
      if (entry.is_regular_file() && entry.path().filename() == "manifest.json") {
        auto m = nlohmann::json::parse(io::read_file(entry.path()));
        cells.push_back({m.at("nu_i").get<int>(), m.at("E_i_eV").get<double>(),
                         entry.path().parent_path(), std::move(m)});
      }
  if (cells.empty()) throw Error("no manifest.json found under " + run_dir.string());
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return a.nu_i != b.nu_i ? a.nu_i < b.nu_i : a.E_i_eV < b.E_i_eV;
  });

  AnalyzeSummary summary;
  summary.n_cells = static_cast<int>(cells.size());
  auto emit = [&](const std::string& name, const std::string& body) {
    const auto path = figures_dir / name;
    io::write_file_atomic(path, body);
    summary.written.push_back(path);
  };

  std::string survival = "nu_i,E_i_eV,nu_f,probability,stderr\n";
  std::string distribution = "nu_i,E_i_eV,nu_f,probability,stderr,relative\n";
  for (const auto& c : cells) {
    const auto t = read_csv(c.dir / "final_states.csv");
    const int nu = t.column("nu_f"), pr = t.column("probability"), se = t.column("stderr");
    double total = 0.0;
    for (const auto& r : t.rows) total += r[pr];
    const std::string head = std::to_string(c.nu_i) + "," + io::format_double(c.E_i_eV) + ",";
    for (const auto& r : t.rows) {
      const std::string body = head + std::to_string(static_cast<int>(r[nu])) + "," +
                               io::format_double(r[pr]) + "," + io::format_double(r[se]);
      survival += body + "\n";
      distribution += body + "," + io::format_double(total != 0.0 ? r[pr] / total : 0.0) + "\n";
    }
  }
  emit("survival.csv", survival);
  emit("distribution.csv", distribution);

  for (const auto& c : cells) {
    const auto R = read_csv(c.dir / "series_bond_length.csv");
    const auto Z = read_csv(c.dir / "series_surface_distance.csv");
    const auto A = read_csv(c.dir / "series_anion_population.csv");
    std::string ts =
        "time_fs,R_angstrom,R_stderr,Z_angstrom,Z_stderr,anion_population,anion_stderr\n";
    std::string mech = "time_fs,R_angstrom,Z_angstrom\n";
    for (std::size_t i = 0; i < R.rows.size(); ++i) {
      const auto f = [](double v) { return io::format_double(v); };
      ts += f(R.rows[i][0]) + "," + f(R.rows[i][1]) + "," + f(R.rows[i][2]) + "," + f(Z.rows[i][1]) +
            "," + f(Z.rows[i][2]) + "," + f(A.rows[i][1]) + "," + f(A.rows[i][2]) + "\n";
      mech += f(R.rows[i][0]) + "," + f(R.rows[i][1]) + "," + f(Z.rows[i][1]) + "\n";
    }
    emit("timeseries_" + tag(c) + ".csv", ts);
    emit("mechanism_" + tag(c) + ".csv", mech);

    const auto energies = c.manifest.at("band_energies_eV").get<std::vector<double>>();
    std::string fan = "time_fs,k,energy_eV,population_change\n";
    for (std::size_t k = 1; k <= energies.size(); ++k) {
      const auto m = read_csv(c.dir / ("series_metal_population_" + std::to_string(k) + ".csv"));
      const double p0 = m.rows.front()[1];
      for (const auto& r : m.rows)
        fan += io::format_double(r[0]) + "," + std::to_string(k) + "," +
               io::format_double(energies[k - 1]) + "," + io::format_double(r[1] - p0) + "\n";
    }
    emit("metal_fan_" + tag(c) + ".csv", fan);
  }

  const auto model = config::model_from_json(cells.front().manifest.at("model"));
  emit("hgap_contour.csv", hgap_contour_csv(model, default_contour_grid()));
  return summary;
}

}  // namespace nah
