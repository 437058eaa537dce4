#include <doctest.h>

#include <cmath>

#include "nah/calibration.hpp"
#include "nah/units.hpp"
#include "test_support.hpp"

using namespace nah;
using namespace nah::units;

namespace {

FitOptions bounds(double lo_eV, double hi_eV) {
  FitOptions o;
  o.gamma_min = eV(lo_eV);
  o.gamma_max = eV(hi_eV);
  o.band_sizes = {};
  return o;
}

}  // namespace

TEST_CASE("standard slices") {
  const auto slices = standard_slices(test::shipped_model());
  REQUIRE(slices.size() == 3);
  for (const auto& s : slices) CHECK(s.points.size() >= 10);
}

TEST_CASE("synthetic round trip recovers Gamma") {
  auto p = test::shipped_model();
  REQUIRE(to_eV(p.coupling.gamma) == doctest::Approx(3.5));
  const auto reference = synthetic_reference(p, standard_slices(p), eV(-0.25));

  auto start = p;
  start.coupling.gamma = eV(1.0);
  auto options = bounds(0.5, 8.0);
  options.band_sizes = {50, 100, 200};
  const auto fit = refit_gamma(reference, start, options);
  CHECK(std::abs(to_eV(fit.gamma) - 3.5) < 0.01);
  CHECK(fit.rms < eV(1e-6));
  REQUIRE(fit.convergence.size() == 3);
  CHECK(fit.convergence[2].max_deviation == 0.0);

  // Local minimum.
  const auto anchor = default_reference_geometry();
  const double r = fit_residual(fit.gamma, reference, start, anchor);
  CHECK(r <= fit_residual(fit.gamma + eV(0.1), reference, start, anchor));
  CHECK(r <= fit_residual(fit.gamma - eV(0.1), reference, start, anchor));
}

TEST_CASE("decoupled reference lands on the zero bound") {
  auto p = test::shipped_model();
  p.coupling.gamma = 0.0;
  const auto reference = synthetic_reference(p, standard_slices(p));
  auto start = p;
  start.coupling.gamma = eV(2.0);
  const auto fit = refit_gamma(reference, start, bounds(0.0, 6.0));
  CHECK(fit.gamma < eV(1e-3));
  CHECK(fit.residual < 1e-12);
}

TEST_CASE("minimum outside the bracket is reported with the residual curve") {
  const auto p = test::shipped_model();
  const auto reference = synthetic_reference(p, standard_slices(p));
  try {
    refit_gamma(reference, p, bounds(0.5, 1.5));
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.residual_curve.size() == 41);
    CHECK(std::string(e.what()).find("no residual minimum") != std::string::npos);
  }
}

TEST_CASE("refit input validation") {
  const auto p = test::shipped_model();
  const auto reference = synthetic_reference(p, standard_slices(p));
  CHECK_THROWS_AS(refit_gamma({reference.front()}, p, bounds(0.0, 5.0)), Error);
  CHECK_THROWS_AS(refit_gamma(reference, p, bounds(5.0, 1.0)), Error);
  // No reference point at the anchor geometry.
  std::vector<ReferenceEnergy> shifted(reference.begin() + 1, reference.end());
  CHECK_THROWS_AS(refit_gamma(shifted, p, bounds(0.0, 5.0)), Error);
}

TEST_CASE("ground energy curves overlap across band sizes") {
  const auto p = test::shipped_model();
  for (const auto& slice : standard_slices(p)) {
    const auto curves =
        band_size_curves(p, slice.points, {50, 100, 200}, default_reference_geometry(), 0.0);
    CAPTURE(slice.name);
    CHECK(to_eV(curves.max_spread()) < 0.010);
  }
}
