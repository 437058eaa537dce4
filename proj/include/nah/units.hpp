#pragma once

// Internal arithmetic is done in Hartree atomic units (hbar = m_e = e = 1).
// Configuration files and CSV outputs use eV, angstrom, amu and fs; the
// conversions below are the only place those units meet.

namespace nah::units {

inline constexpr double hartree_eV = 27.211386245988;
inline constexpr double bohr_angstrom = 0.529177210903;
inline constexpr double amu_me = 1822.888486209;
inline constexpr double au_time_fs = 2.4188843265857e-2;
inline constexpr double boltzmann_eV_per_K = 8.617333262e-5;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

constexpr double eV(double value) { return value / hartree_eV; }
constexpr double angstrom(double value) { return value / bohr_angstrom; }
constexpr double per_angstrom(double value) { return value * bohr_angstrom; }
constexpr double per_angstrom2(double value) { return value * bohr_angstrom * bohr_angstrom; }
constexpr double amu(double value) { return value * amu_me; }
constexpr double fs(double value) { return value / au_time_fs; }
constexpr double per_eV(double value) { return value * hartree_eV; }

constexpr double to_eV(double e) { return e * hartree_eV; }
constexpr double to_angstrom(double x) { return x * bohr_angstrom; }
constexpr double to_fs(double t) { return t * au_time_fs; }

}  // namespace nah::units
