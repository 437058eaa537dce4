#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "nah/integrator.hpp"
#include "nah/observables.hpp"
#include "nah/phase_space_sampling.hpp"
#include "nah/units.hpp"
#include "test_support.hpp"

using namespace nah;
using namespace nah::units;

namespace {

IntegratorConfig short_config(double t_max_fs) {
  auto cfg = default_integrator_config();
  cfg.t_max = fs(t_max_fs);
  return cfg;
}

/// Incoming molecule at 5 A with a filled Fermi sea on random phases.
MappedState incoming(const SystemModel& m, double E_i_eV, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  MappedState s;
  s.R = m.params.morse_neutral.center + angstrom(0.05);
  s.P_R = 3.0;
  s.Z = angstrom(5.0);
  s.P_Z = incoming_momentum(eV(E_i_eV), m.params);
  s.x.assign(m.dimension(), 0.0);
  s.p.assign(m.dimension(), 0.0);
  for (int k = 1; k <= m.n_states(); ++k) {
    if (m.band.energies[k - 1] >= m.params.band.mu) continue;
    const double th = phase(rng);
    s.x[k] = std::sqrt(2.0) * std::cos(th);
    s.p[k] = std::sqrt(2.0) * std::sin(th);
    s.n_electrons += 1.0;
  }
  return s;
}

double max_abs_diff(const MappedState& a, const MappedState& b) {
  double d = std::max({std::abs(a.R - b.R), std::abs(a.Z - b.Z), std::abs(a.P_R - b.P_R),
                       std::abs(a.P_Z - b.P_Z)});
  for (std::size_t k = 0; k < a.x.size(); ++k)
    d = std::max({d, std::abs(a.x[k] - b.x[k]), std::abs(a.p[k] - b.p[k])});
  return d;
}

bool same_bytes(const std::vector<Snapshot>& a, const std::vector<Snapshot>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(Snapshot)) == 0;
}

}  // namespace

TEST_CASE("integrator config validation") {
  auto cfg = default_integrator_config();
  CHECK(to_fs(cfg.dt) == doctest::Approx(0.015));
  CHECK(cfg.energy_tol == 1e-3);
  CHECK(cfg.R_min == 0.5);
  CHECK(cfg.R_max == 10.0);
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.energy_tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.R_min = bad.R_max;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("free drift") {
  auto p = test::reference_model(6);
  p.coupling.gamma = 0.0;
  const SystemModel m(p);
  MappedState s;
  s.R = p.morse_neutral.center;
  s.Z = 1000.0;
  s.P_Z = -12.5;
  s.x.assign(m.dimension(), 0.0);
  s.p.assign(m.dimension(), 0.0);
  const auto cfg = default_integrator_config();
  const auto out = step(s, cfg, m);
  CHECK(out.Z == doctest::Approx(s.Z + s.P_Z * cfg.dt / p.masses.total).epsilon(1e-15));
  CHECK(out.R == s.R);
  CHECK(out.P_R == 0.0);
  CHECK(out.P_Z == s.P_Z);
}

TEST_CASE("one step forward and back is the identity") {
  std::mt19937_64 rng(21);
  for (auto scheme : {ElectronicScheme::split, ElectronicScheme::exact}) {
    const SystemModel small([&] {
      auto p = test::shipped_model();
      if (scheme == ElectronicScheme::exact) p.band.n_states = 12;
      return p;
    }());
    auto cfg = default_integrator_config();
    cfg.scheme = scheme;
    const Propagator prop(small, cfg);
    for (int i = 0; i < 10; ++i) {
      auto s0 = test::random_state(small, rng);
      s0.n_electrons = 0.5 * small.n_states();
      auto s = s0;
      prop.step(s);
      prop.step(s, true);
      double scale = 0.0;
      for (double v : {s0.R, s0.Z, s0.P_R, s0.P_Z}) scale = std::max(scale, std::abs(v));
      CHECK(max_abs_diff(s, s0) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("two-level electronic rotation against the analytic solution") {
  auto p = test::reference_model(1);
  const SystemModel m(p);
  MappedState s;
  s.R = angstrom(1.2);
  s.Z = angstrom(1.4);
  s.x = {0.3, -1.1};
  s.p = {0.8, 0.4};
  const auto pm = build_potential_matrix(s.R, s.Z, m, 1.0);
  const double a = pm.corner - pm.shift;  // V~ = [[a, v], [v, -a]]
  const double v = pm.border[0];
  const double lam = std::hypot(a, v);
  for (double t : {1.0, 17.0, 250.0}) {
    const double c = std::cos(lam * t), sl = std::sin(lam * t) / lam;
    const double x0 = c * s.x[0] + sl * (a * s.p[0] + v * s.p[1]);
    const double x1 = c * s.x[1] + sl * (v * s.p[0] - a * s.p[1]);
    const double p0 = c * s.p[0] - sl * (a * s.x[0] + v * s.x[1]);
    const double p1 = c * s.p[1] - sl * (v * s.x[0] - a * s.x[1]);

    auto e = s;
    propagate_electronic(e, m, t, true);
    CHECK(std::abs(e.x[0] - x0) < 1e-10);
    CHECK(std::abs(e.x[1] - x1) < 1e-10);
    CHECK(std::abs(e.p[0] - p0) < 1e-10);
    CHECK(std::abs(e.p[1] - p1) < 1e-10);

    // The split flow converges to the same rotation at second order.
    auto coarse = s, fine = s;
    propagate_electronic(coarse, m, t, false, 200);
    propagate_electronic(fine, m, t, false, 400);
    const double ec = std::hypot(coarse.x[0] - x0, coarse.p[0] - p0);
    const double ef = std::hypot(fine.x[0] - x0, fine.p[0] - p0);
    CHECK(ef < 1e-4);
    if (ec > 1e-13) CHECK(ec / ef == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("decoupled metal keeps its populations") {
  auto p = test::shipped_model();
  p.band.n_states = 20;
  p.coupling.gamma = 0.0;
  const SystemModel m(p);
  const Propagator prop(m, short_config(150.0));
  const auto s0 = incoming(m, 0.5, 1);
  double worst = 0.0;
  const auto rec = run_trajectory(s0, prop, [&](long, double, const MappedState& s) {
    for (int k = 0; k < m.dimension(); ++k) {
      const double n = s.x[k] * s.x[k] + s.p[k] * s.p[k];
      const double n0 = s0.x[k] * s0.x[k] + s0.p[k] * s0.p[k];
      worst = std::max(worst, std::abs(n - n0));
    }
  });
  CHECK(rec.discard_reason == DiscardReason::none);
  CHECK(worst < 1e-10);  // roundoff over 1e4 rotations
  CHECK(rec.final_state.x[0] == 0.0);
  CHECK(rec.final_state.p[0] == 0.0);
}

TEST_CASE("electron count and mapping norm are conserved along a trajectory") {
  auto p = test::shipped_model();
  p.band.n_states = 40;
  const SystemModel m(p);
  const Propagator prop(m, short_config(300.0));
  const auto s0 = incoming(m, 1.0, 2);
  const double ne0 = electron_count(s0, 0.0);
  double worst = 0.0, peak_anion = 0.0;
  const auto rec = run_trajectory(s0, prop, [&](long, double, const MappedState& s) {
    worst = std::max(worst, std::abs(electron_count(s, 0.0) - ne0));
    peak_anion = std::max(peak_anion, estimate_anion_population(s, 0.0));
  });
  CHECK(rec.discard_reason == DiscardReason::none);
  CHECK(rec.max_energy_drift < 1e-3);
  CHECK(worst < 1e-8);
  CHECK(peak_anion > 0.01);  // the coupling does act
  CHECK(std::abs(electron_count(rec.final_state, 0.0) - ne0) < 1e-8);
}

TEST_CASE("halving the time step cuts the energy error fourfold") {
  auto p = test::shipped_model();
  p.band.n_states = 20;
  const SystemModel m(p);
  const auto s0 = incoming(m, 0.5, 3);
  auto drift = [&](double dt_fs) {
    auto cfg = short_config(150.0);
    cfg.dt = fs(dt_fs);
    cfg.energy_tol = 1.0;
    cfg.early_stop = false;
    const auto rec = run_trajectory(s0, Propagator(m, cfg));
    REQUIRE(rec.discard_reason == DiscardReason::none);
    return rec.max_energy_drift;
  };
  const double ratio = drift(0.03) / drift(0.015);
  CAPTURE(ratio);
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.0);
}

TEST_CASE("dynamics do not depend on the estimator zero-point parameter") {
  auto p = test::shipped_model();
  p.band.n_states = 16;
  const SystemModel m(p);
  const Propagator prop(m, short_config(120.0));
  const auto s0 = incoming(m, 0.5, 4);
  const SeriesLayout layout{m.n_states(), 0};
  const long n_rec = prop.config().n_records();
  const std::vector<WignerTable> no_tables;
  TrajectoryObservables g0(layout, n_rec, &no_tables, 0.0), g1(layout, n_rec, &no_tables, 1.0);
  const auto a = run_trajectory(s0, prop, [&](long i, double, const MappedState& s) { g0.record(i, s); });
  const auto b = run_trajectory(s0, prop, [&](long i, double, const MappedState& s) { g1.record(i, s); });
  CHECK(same_bytes(a.snapshots, b.snapshots));
  CHECK(std::memcmp(a.final_state.x.data(), b.final_state.x.data(),
                    a.final_state.x.size() * sizeof(double)) == 0);
  for (long i = 0; i < g0.recorded(); ++i)
    CHECK(g0.value(i, SeriesLayout::anion) - g1.value(i, SeriesLayout::anion) ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("trajectories are deterministic") {
  auto p = test::shipped_model();
  p.band.n_states = 16;
  const SystemModel m(p);
  const Propagator prop(m, short_config(80.0));
  const auto s0 = incoming(m, 0.25, 5);
  const auto a = run_trajectory(s0, prop);
  const auto b = run_trajectory(s0, prop);
  CHECK(same_bytes(a.snapshots, b.snapshots));
  CHECK(a.max_energy_drift == b.max_energy_drift);
}

TEST_CASE("discard filters") {
  auto p = test::shipped_model();
  p.band.n_states = 10;
  const SystemModel m(p);
  const auto s0 = incoming(m, 0.5, 6);

  auto cfg = short_config(20.0);
  cfg.energy_tol = 1e-14;
  auto rec = run_trajectory(s0, Propagator(m, cfg));
  CHECK(rec.discard_reason == DiscardReason::energy);
  CHECK(rec.max_energy_drift > cfg.energy_tol);

  cfg = short_config(20.0);
  cfg.R_min = s0.R - 0.01;  // the stretched bond contracts first
  rec = run_trajectory(s0, Propagator(m, cfg));
  CHECK(rec.discard_reason == DiscardReason::bond_range);
  CHECK(std::string(to_string(rec.discard_reason)) == "bond_range");

  cfg = short_config(20.0);
  rec = run_trajectory(s0, Propagator(m, cfg));
  CHECK(rec.discard_reason == DiscardReason::none);
  CHECK(rec.max_energy_drift <= cfg.energy_tol);
  for (const auto& snap : rec.snapshots) {
    CHECK(snap.R >= cfg.R_min);
    CHECK(snap.R <= cfg.R_max);
  }
}

TEST_CASE("non-finite states are reported with the last finite one") {
  auto p = test::shipped_model();
  p.band.n_states = 4;
  const SystemModel m(p);
  auto s = incoming(m, 0.5, 7);
  s.R = -1000.0;  // Morse wall overflows
  const Propagator prop(m, default_integrator_config());
  try {
    auto t = s;
    prop.step(t);
    FAIL("expected NonFiniteStateError");
  } catch (const NonFiniteStateError& e) {
    CHECK(e.last_finite_state.R == s.R);
  }
  auto cfg = default_integrator_config();
  cfg.R_min = -2000.0;
  const auto rec = run_trajectory(s, Propagator(m, cfg));
  CHECK(rec.discard_reason == DiscardReason::energy);
}

TEST_CASE("vibrational energy of the isolated bond") {
  const auto p = test::shipped_model();
  MappedState s;
  s.R = p.morse_neutral.center;
  CHECK(vibrational_energy(s, p) == doctest::Approx(0.0).epsilon(1e-15));
  s.P_R = 2.0;
  CHECK(vibrational_energy(s, p) == doctest::Approx(2.0 / p.masses.reduced));
}
