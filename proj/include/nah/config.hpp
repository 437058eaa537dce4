#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nah/calibration.hpp"
#include "nah/model_potential.hpp"

// Model configuration file (JSON). Every key carries its unit in the name:
//
//   morse_neutral  { D0_eV, a0_per_angstrom, R0_angstrom }
//   morse_anion    { D1_eV, a1_per_angstrom, R1_angstrom }
//   anion_surface  { D2_eV, a2_per_angstrom, Z1_angstrom }
//   repulsion      { b0_per_angstrom, Z0_angstrom }
//   offsets        { c0_eV, c1_eV }
//   coupling       { Gamma_eV, a_tilde_angstrom }
//   band           { DeltaE_eV, N, mu_eV, beta_per_eV | temperature_K }
//   masses         { total_amu, reduced_amu }
//   fermi_convention  "standard" | "printed"      (optional)
//   energy_offset_eV  number                      (optional)
//
// Unknown keys are rejected so that typos cannot silently fall back to defaults.

namespace nah::config {

ModelParameters model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ModelParameters& p);
ModelParameters load_model(const std::filesystem::path& path);

/// Reference energies CSV with mandatory header `R_angstrom,Z_angstrom,E_eV`.
std::vector<ReferenceEnergy> load_reference_csv(const std::filesystem::path& path);
std::string reference_to_csv(const std::vector<ReferenceEnergy>& reference);

}  // namespace nah::config
