#include "support.hpp"

#include "tlsloss/errors.hpp"
#include "tlsloss/fieldsolver.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace tlsloss;
using namespace tlsloss::fieldsolver;
using testing::rel_err;

namespace {

double plate_oracle(const ParallelPlateGeometry& g) {
  const double film = g.bottom_layer->thickness_m / g.bottom_layer->epsilon;
  return film / (film + g.separation_m / g.epsilon);
}

CpwGeometry small_cpw() {
  CpwGeometry g;
  g.center_width_m = 10e-6;
  g.gap_m = 6e-6;
  g.cells_per_gap = 6;
  return g;
}

}  // namespace

TEST_SUITE("fieldsolver") {

TEST_CASE("parallel plate matches the series-capacitor film fraction") {
  const ParallelPlateGeometry g;
  const auto r = refine_until_converged(g.cross_section(), 0.01);
  const double p = r.participations.at(InterfaceKind::SubstrateMetal).total;
  CHECK(rel_err(p, plate_oracle(g)) < 0.01);
  CHECK(r.trajectory.size() <= 4);  // at most three refinements
  CHECK(r.participations.error_estimate >= r.trajectory.back().max_relative_change);
  CHECK(std::isnan(r.trajectory.front().max_relative_change));
}

TEST_CASE("parallel plate film sits on the grounded plate only") {
  const ParallelPlateGeometry g;
  const auto cs = g.cross_section();
  const auto sol = solve_cross_section(cs, 1.0);
  const auto p = compute_participations(sol, cs);
  const auto& per = p.at(InterfaceKind::SubstrateMetal).per_conductor;
  REQUIRE(per.size() == 1);
  CHECK(per.begin()->first == "bottom");
  CHECK(std::isnan(p.error_estimate));
}

TEST_CASE("potential obeys the maximum principle") {
  const auto cs = small_cpw().cross_section();
  const double v = 2.5;
  const auto sol = solve_cross_section(cs, v);
  const auto [lo, hi] = std::minmax_element(sol.potential.begin(), sol.potential.end());
  CHECK(*lo >= -1e-12 * v);
  CHECK(*hi <= v * (1.0 + 1e-12));
  CHECK(sol.relative_residual < 1e-8);
  CHECK(sol.unknowns > 0);
}

TEST_CASE("symmetric geometry gives a mirror-symmetric potential") {
  const auto cs = small_cpw().cross_section();
  const auto sol = solve_cross_section(cs, 1.0);
  const std::size_t nx = sol.nx();
  for (std::size_t i = 0; i < nx; ++i) CHECK(std::abs(sol.x[i] + sol.x[nx - 1 - i]) < 1e-15);
  double worst = 0.0;
  for (std::size_t j = 0; j < sol.ny(); ++j) {
    for (std::size_t i = 0; i < nx; ++i) worst = std::max(worst, std::abs(sol.phi(i, j) - sol.phi(nx - 1 - i, j)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("participations do not depend on the excitation voltage") {
  const auto cs = small_cpw().cross_section();
  const auto a = compute_participations(solve_cross_section(cs, 1.0), cs);
  const auto b = compute_participations(solve_cross_section(cs, 7.3), cs);
  for (const auto kind : kAllInterfaces) {
    CHECK(rel_err(b.at(kind).total, a.at(kind).total) < 1e-9);
  }
  CHECK(a.sum() > 0.0);
  CHECK(a.sum() < 0.01);
}

TEST_CASE("energy and Gauss-law capacitances agree") {
  for (const auto& cs : {small_cpw().cross_section(), ParallelPlateGeometry{}.cross_section()}) {
    const auto sol = solve_cross_section(cs, 1.0);
    REQUIRE(sol.capacitance_charge.has_value());
    CHECK(rel_err(*sol.capacitance_charge, sol.capacitance_energy) < 0.01);
  }
}

TEST_CASE("parallel plate capacitance is eps0 eps W / d in series with the film") {
  const ParallelPlateGeometry g;
  const auto sol = solve_cross_section(g.cross_section(), 1.0, 1);
  const double series = g.separation_m / g.epsilon + g.bottom_layer->thickness_m / g.bottom_layer->epsilon;
  // The film is not meshed, so the solver sees only the bulk dielectric.
  const double bulk = 8.8541878128e-12 * g.width_m * g.epsilon / g.separation_m;
  CHECK(rel_err(sol.capacitance_energy, bulk) < 1e-6);
  CHECK(series > g.separation_m / g.epsilon);
}

TEST_CASE("doubling the CPW dimensions halves the thin-film participations") {
  CpwGeometry a;
  CpwGeometry b = a;
  b.center_width_m *= 2.0;
  b.gap_m *= 2.0;
  b.metal_thickness_m *= 2.0;
  const auto pa = refine_until_converged(a.cross_section(), 0.02).participations;
  const auto pb = refine_until_converged(b.cross_section(), 0.02).participations;
  for (const auto kind : kAllInterfaces) {
    CHECK(pb.at(kind).total / pa.at(kind).total == doctest::Approx(0.5).epsilon(0.1));
  }
}

TEST_CASE("CPW participations per conductor add up") {
  const auto r = refine_until_converged(CpwGeometry{}.cross_section(), 0.01);
  for (const auto kind : kAllInterfaces) {
    const auto& ip = r.participations.at(kind);
    double sum = 0.0;
    for (const auto& [label, v] : ip.per_conductor) sum += v;
    CHECK(rel_err(sum, ip.total) < 1e-12);
    CHECK(ip.total > 0.0);
    CHECK(ip.total < 0.01);
  }
  const auto& sm = r.participations.at(InterfaceKind::SubstrateMetal).per_conductor;
  CHECK(sm.count("center") == 1);
}

TEST_CASE("refinement tolerance must lie in (0, 0.1]") {
  const auto cs = ParallelPlateGeometry{}.cross_section();
  CHECK_THROWS_AS(refine_until_converged(cs, 0.0), PreconditionError);
  CHECK_THROWS_AS(refine_until_converged(cs, 0.5), PreconditionError);
  CHECK_THROWS_AS(refine_until_converged(cs, -0.01), PreconditionError);
}

TEST_CASE("missing interface is reported") {
  auto cs = ParallelPlateGeometry{}.cross_section();
  cs.layers[InterfaceKind::SubstrateVacuum] = InterfaceLayer{3e-9, 4.0};
  const auto sol = solve_cross_section(cs, 1.0);
  CHECK_THROWS_AS(compute_participations(sol, cs), InterfaceNotSampledError);
}

TEST_CASE("participations refuse a solution of another geometry") {
  const auto a = small_cpw().cross_section();
  const auto b = CpwGeometry{}.cross_section();
  CHECK(a.fingerprint() != b.fingerprint());
  const auto sol = solve_cross_section(a, 1.0);
  CHECK_THROWS_AS(compute_participations(sol, b), PreconditionError);
}

TEST_CASE("unknown cap ends refinement with the trajectory") {
  RefineOptions opts;
  opts.max_unknowns = 2000;
  try {
    refine_until_converged(CpwGeometry{}.cross_section(), 1e-6, opts);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    for (const auto& step : e.trajectory()) CHECK(step.unknowns <= opts.max_unknowns);
  }
}

TEST_CASE("refinement levels shrink the mesh steps") {
  const auto cs = CpwGeometry{}.cross_section();
  const auto m0 = build_mesh(cs, 0);
  const auto m1 = build_mesh(cs, 1);
  CHECK(m1[0].size() > m0[0].size());
  CHECK(m1[1].size() > m0[1].size());
  CHECK(std::is_sorted(m1[0].begin(), m1[0].end()));
  CHECK(m0[0].front() == doctest::Approx(cs.domain.x0));
  CHECK(m0[1].back() == doctest::Approx(cs.domain.y1));
  CHECK_THROWS_AS(build_mesh(cs, -1), PreconditionError);
}

TEST_CASE("geometry validation") {
  CpwGeometry g;
  g.gap_m = -1.0;
  CHECK_THROWS_AS(g.validate(), PreconditionError);
  CpwGeometry narrow;
  narrow.domain_half_width_m = 50e-6;
  CHECK_THROWS_AS(narrow.validate(), PreconditionError);
  ParallelPlateGeometry pp;
  pp.epsilon = 0.5;
  CHECK_THROWS_AS(pp.validate(), PreconditionError);
  CHECK_THROWS_AS(solve_cross_section(ParallelPlateGeometry{}.cross_section(), 0.0), PreconditionError);
}

}  // TEST_SUITE
