#include "nah/config.hpp"

#include <set>
#include <sstream>

#include "nah/io.hpp"
#include "nah/units.hpp"

namespace nah::config {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error("model config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error("model config: unknown key '" + where + "." + key + "'");
}

double number(const json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw Error("model config: missing key '" + where + "." + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw Error("model config: '" + where + "." + key + "' must be a number");
  return v.get<double>();
}

const json& section(const json& j, const std::string& name) {
  if (!j.contains(name)) throw Error("model config: missing section '" + name + "'");
  return j.at(name);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

}  // namespace

ModelParameters model_from_json(const json& j) {
  using namespace units;
  check_keys(j, "",
             {"morse_neutral", "morse_anion", "anion_surface", "repulsion", "offsets", "coupling",
              "band", "masses", "fermi_convention", "energy_offset_eV", "description"});
  ModelParameters p;

  const auto& mn = section(j, "morse_neutral");
  check_keys(mn, "morse_neutral", {"D0_eV", "a0_per_angstrom", "R0_angstrom"});
  p.morse_neutral = {eV(number(mn, "morse_neutral", "D0_eV")),
                     per_angstrom(number(mn, "morse_neutral", "a0_per_angstrom")),
                     angstrom(number(mn, "morse_neutral", "R0_angstrom"))};

  const auto& ma = section(j, "morse_anion");
  check_keys(ma, "morse_anion", {"D1_eV", "a1_per_angstrom", "R1_angstrom"});
  p.morse_anion = {eV(number(ma, "morse_anion", "D1_eV")),
                   per_angstrom(number(ma, "morse_anion", "a1_per_angstrom")),
                   angstrom(number(ma, "morse_anion", "R1_angstrom"))};

  const auto& as = section(j, "anion_surface");
  check_keys(as, "anion_surface", {"D2_eV", "a2_per_angstrom", "Z1_angstrom"});
  p.anion_surface = {eV(number(as, "anion_surface", "D2_eV")),
                     per_angstrom(number(as, "anion_surface", "a2_per_angstrom")),
                     angstrom(number(as, "anion_surface", "Z1_angstrom"))};

  const auto& rep = section(j, "repulsion");
  check_keys(rep, "repulsion", {"b0_per_angstrom", "Z0_angstrom"});
  p.repulsion.b0 = per_angstrom(number(rep, "repulsion", "b0_per_angstrom"));
  p.repulsion.Z0 = angstrom(number(rep, "repulsion", "Z0_angstrom"));

  const auto& off = section(j, "offsets");
  check_keys(off, "offsets", {"c0_eV", "c1_eV"});
  p.offsets.c0 = eV(number(off, "offsets", "c0_eV"));
  p.offsets.c1 = eV(number(off, "offsets", "c1_eV"));

  const auto& cp = section(j, "coupling");
  check_keys(cp, "coupling", {"Gamma_eV", "a_tilde_angstrom"});
  p.coupling.gamma = eV(number(cp, "coupling", "Gamma_eV"));
  p.coupling.a_tilde = angstrom(number(cp, "coupling", "a_tilde_angstrom"));

  const auto& bd = section(j, "band");
  check_keys(bd, "band", {"DeltaE_eV", "N", "mu_eV", "beta_per_eV", "temperature_K"});
  p.band.width = eV(number(bd, "band", "DeltaE_eV"));
  const double n = number(bd, "band", "N");
  if (n != static_cast<double>(static_cast<int>(n)))
    throw Error("model config: 'band.N' must be an integer");
  p.band.n_states = static_cast<int>(n);
  p.band.mu = eV(number(bd, "band", "mu_eV"));
  if (bd.contains("beta_per_eV") && bd.contains("temperature_K"))
    throw Error("model config: give either 'band.beta_per_eV' or 'band.temperature_K', not both");
  if (bd.contains("temperature_K")) {
    const double t = number(bd, "band", "temperature_K");
    if (!(t > 0.0)) throw Error("model config: 'band.temperature_K' must be > 0");
    p.band.beta = per_eV(1.0 / (boltzmann_eV_per_K * t));
  } else {
    p.band.beta = per_eV(number(bd, "band", "beta_per_eV"));
  }

  const auto& ms = section(j, "masses");
  check_keys(ms, "masses", {"total_amu", "reduced_amu"});
  p.masses.total = amu(number(ms, "masses", "total_amu"));
  p.masses.reduced = amu(number(ms, "masses", "reduced_amu"));

  if (j.contains("fermi_convention")) {
    const auto s = j.at("fermi_convention").get<std::string>();
    if (s == "standard")
      p.fermi = FermiConvention::standard;
    else if (s == "printed")
      p.fermi = FermiConvention::printed;
    else
      throw Error("model config: 'fermi_convention' must be 'standard' or 'printed'");
  }
  if (j.contains("energy_offset_eV")) p.energy_offset = eV(number(j, "", "energy_offset_eV"));

  p.validate();
  return p;
}

json model_to_json(const ModelParameters& p) {
  using namespace units;
  json j;
  j["morse_neutral"] = {{"D0_eV", to_eV(p.morse_neutral.depth)},
                        {"a0_per_angstrom", p.morse_neutral.range / bohr_angstrom},
                        {"R0_angstrom", to_angstrom(p.morse_neutral.center)}};
  j["morse_anion"] = {{"D1_eV", to_eV(p.morse_anion.depth)},
                      {"a1_per_angstrom", p.morse_anion.range / bohr_angstrom},
                      {"R1_angstrom", to_angstrom(p.morse_anion.center)}};
  j["anion_surface"] = {{"D2_eV", to_eV(p.anion_surface.depth)},
                        {"a2_per_angstrom", p.anion_surface.range / bohr_angstrom},
                        {"Z1_angstrom", to_angstrom(p.anion_surface.center)}};
  j["repulsion"] = {{"b0_per_angstrom", p.repulsion.b0 / bohr_angstrom},
                    {"Z0_angstrom", to_angstrom(p.repulsion.Z0)}};
  j["offsets"] = {{"c0_eV", to_eV(p.offsets.c0)}, {"c1_eV", to_eV(p.offsets.c1)}};
  j["coupling"] = {{"Gamma_eV", to_eV(p.coupling.gamma)},
                   {"a_tilde_angstrom", to_angstrom(p.coupling.a_tilde)}};
  j["band"] = {{"DeltaE_eV", to_eV(p.band.width)},
               {"N", p.band.n_states},
               {"mu_eV", to_eV(p.band.mu)},
               {"beta_per_eV", p.band.beta / hartree_eV}};
  j["masses"] = {{"total_amu", p.masses.total / amu_me},
                 {"reduced_amu", p.masses.reduced / amu_me}};
  j["fermi_convention"] = p.fermi == FermiConvention::standard ? "standard" : "printed";
  j["energy_offset_eV"] = to_eV(p.energy_offset);
  return j;
}

ModelParameters load_model(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("model config " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

std::vector<ReferenceEnergy> load_reference_csv(const std::filesystem::path& path) {
  std::stringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty reference file");
  const auto header = split(line);
  if (header != std::vector<std::string>{"R_angstrom", "Z_angstrom", "E_eV"})
    throw Error(path.string() + ": header must be R_angstrom,Z_angstrom,E_eV");
  std::vector<ReferenceEnergy> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != 3)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
    try {
      out.push_back({units::angstrom(std::stod(cells[0])), units::angstrom(std::stod(cells[1])),
                     units::eV(std::stod(cells[2]))});
    } catch (const std::exception&) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return out;
}

std::string reference_to_csv(const std::vector<ReferenceEnergy>& reference) {
  std::string out = "R_angstrom,Z_angstrom,E_eV\n";
  for (const auto& r : reference) {
    out += io::format_double(units::to_angstrom(r.R)) + "," +
           io::format_double(units::to_angstrom(r.Z)) + "," + io::format_double(units::to_eV(r.E)) +
           "\n";
  }
  return out;
}

}  // namespace nah::config
