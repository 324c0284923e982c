#include "tlsloss/constants.hpp"
#include "tlsloss/errors.hpp"
#include "tlsloss/fieldsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace tlsloss::fieldsolver {
namespace {

// Surface integrand of one sample, without the eps0/2 factor.
double integrand(const BoundarySample& s, const InterfaceLayer& layer) {
  switch (s.kind) {
    case InterfaceKind::MetalVacuum:
      return s.e_perp_sq / layer.epsilon;
    case InterfaceKind::SubstrateMetal:
      return s.side_epsilon * s.side_epsilon / layer.epsilon * s.e_perp_sq;
    case InterfaceKind::SubstrateVacuum:
      return layer.epsilon * s.e_par_sq + s.e_perp_sq / layer.epsilon;
  }
  return 0.0;
}

double relative_change(double now, double before) {
  const double scale = std::max(std::abs(now), std::abs(before));
  return scale > 0.0 ? std::abs(now - before) / scale : 0.0;
}

double max_relative_change(const ParticipationSet& now, const ParticipationSet& before) {
  double worst = 0.0;
  for (const auto& [kind, p] : now.interfaces) {
    const auto it = before.interfaces.find(kind);
    if (it == before.interfaces.end()) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, relative_change(p.total, it->second.total));
    for (const auto& [label, v] : p.per_conductor) {
      const auto jt = it->second.per_conductor.find(label);
      const double prev = jt == it->second.per_conductor.end() ? 0.0 : jt->second;
      // Per-conductor shares far below the total are noise-dominated; judge them against the total.
      const double scale = std::max({std::abs(v), std::abs(prev), 1e-3 * std::abs(p.total)});
      worst = std::max(worst, std::abs(v - prev) / scale);
    }
  }
  return worst;
}

}  // namespace

ParticipationSet compute_participations(const FieldSolution& solution, const CrossSection& section) {
  if (solution.geometry_fingerprint != section.fingerprint()) {
    throw PreconditionError("compute_participations: solution was not produced from this geometry");
  }
  if (!(solution.total_energy > 0.0)) {
    throw DomainError("compute_participations: total energy must be positive");
  }
  ParticipationSet out;
  out.refinement_level = solution.refinement_level;
  out.unknowns = solution.unknowns;
  out.min_step = solution.min_step;
  out.error_estimate = std::numeric_limits<double>::quiet_NaN();

  const auto& coated = section.film_conductors;
  auto has_film = [&](const BoundarySample& s) {
    return s.kind == InterfaceKind::SubstrateVacuum || coated.empty() ||
           std::find(coated.begin(), coated.end(), s.conductor) != coated.end();
  };
  const double half_eps0 = 0.5 * constants::vacuum_permittivity;
  for (const auto& [kind, layer] : section.layers) {
    InterfaceParticipation ip;
    bool sampled = false;
    for (const auto& s : solution.samples) {
      if (s.kind != kind || !has_film(s)) continue;
      sampled = true;
      const double p = layer.thickness_m * half_eps0 * integrand(s, layer) * s.length / solution.total_energy;
      ip.total += p;
      ip.per_conductor[s.conductor] += p;
    }
    if (!sampled) {
      throw InterfaceNotSampledError("interface not sampled: " + std::string(to_string(kind)));
    }
    out.interfaces.emplace(kind, std::move(ip));
  }
  return out;
}

RefinementResult refine_until_converged(const CrossSection& section, double tolerance,
                                        const RefineOptions& options) {
  if (!(tolerance > 0.0 && tolerance <= 0.1)) {
    throw PreconditionError("refine_until_converged: tolerance must lie in (0, 0.1]");
  }
  section.validate();
  std::vector<ConvergenceStep> trajectory;
  std::optional<ParticipationSet> previous;
  for (int level = 0; level <= options.max_level; ++level) {
    const auto mesh = build_mesh(section, level);
    const std::size_t nodes = mesh[0].size() * mesh[1].size();
    if (nodes > options.max_unknowns) {
      std::ostringstream msg;
      msg << "convergence not reached: level " << level << " needs " << nodes << " nodes, cap is "
          << options.max_unknowns;
      throw ConvergenceError(msg.str(), std::move(trajectory));
    }
    FieldSolution sol = solve_cross_section(section, 1.0, level);
    ParticipationSet p = compute_participations(sol, section);

    ConvergenceStep step;
    step.level = level;
    step.unknowns = sol.unknowns;
    step.min_step = sol.min_step;
    step.max_relative_change =
        previous ? max_relative_change(p, *previous) : std::numeric_limits<double>::quiet_NaN();
    p.error_estimate = step.max_relative_change;
    step.participations = p;
    trajectory.push_back(step);

    if (previous && step.max_relative_change < tolerance) {
      return {std::move(p), std::move(trajectory), std::move(sol)};
    }
    previous = std::move(p);
  }
  throw ConvergenceError("convergence not reached within " + std::to_string(options.max_level) +
                             " refinement levels",
                         std::move(trajectory));
}

}  // namespace tlsloss::fieldsolver
