#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tlsloss::fieldsolver {

/// Thin dielectric films that are never meshed: substrate-metal, substrate-vacuum and
/// metal-vacuum.
enum class InterfaceKind { SubstrateMetal, SubstrateVacuum, MetalVacuum };

inline constexpr std::array<InterfaceKind, 3> kAllInterfaces{
    InterfaceKind::SubstrateMetal, InterfaceKind::SubstrateVacuum, InterfaceKind::MetalVacuum};

std::string_view to_string(InterfaceKind kind);  // "sm", "sv", "mv"

struct InterfaceLayer {
  double thickness_m = 3e-9;
  double epsilon = 1.0;
};

struct Rect {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
};

enum class BoundaryCondition { Grounded, ZeroFlux };

/// Perfect conductor held at `potential_scale` times the excitation voltage.
struct Conductor {
  std::string label;
  Rect shape;
  double potential_scale = 0.0;
};

struct Dielectric {
  Rect shape;
  double epsilon = 1.0;
};

/// Rectilinear graded mesh control. Spacing is the smallest of `far_step`,
/// `coarse_step + grading * (distance to the structure box)` and
/// `fine_step + grading * (distance to the nearest focus line)`.
struct MeshSettings {
  double fine_step = 0.0;
  double coarse_step = 0.0;
  double far_step = 0.0;
  double grading = 0.25;
  /// Lower bound on the refined fine step. Edge fields are nearly non-integrable at
  /// metal corners, so the thin-film integrals need a cutoff at the film scale.
  double fine_floor = 0.0;
  Rect structure;
  std::vector<double> x_foci;
  std::vector<double> y_foci;
  /// Mesh is generated for x >= mirror_x and reflected.
  std::optional<double> mirror_x;
};

/// General 2D electrostatic problem: vacuum background, dielectric rectangles ("substrate"
/// material), conductor rectangles, grounded or zero-flux outer sides.
struct CrossSection {
  Rect domain;
  /// left, right, bottom, top
  std::array<BoundaryCondition, 4> boundary{BoundaryCondition::Grounded, BoundaryCondition::Grounded,
                                            BoundaryCondition::Grounded, BoundaryCondition::Grounded};
  std::vector<Conductor> conductors;
  std::vector<Dielectric> dielectrics;
  std::map<InterfaceKind, InterfaceLayer> layers;
  /// When non-empty, SM and MV films exist only on these conductors.
  std::vector<std::string> film_conductors;
  MeshSettings mesh;
  /// Closed contour around the driven conductor for the Gauss-law capacitance.
  std::optional<Rect> gauss_contour;

  void validate() const;
  std::uint64_t fingerprint() const;
};

/// Coplanar waveguide on a substrate, centred at x = 0, substrate surface at y = 0.
/// Ground planes run to the lateral domain walls.
struct CpwGeometry {
  double center_width_m = 24e-6;
  double gap_m = 24e-6;
  double metal_thickness_m = 100e-9;
  double substrate_epsilon = 11.6;
  /// Defaults to the smallest domain meeting the margin rule: (w/2 + g) + 5 (w + 2g).
  std::optional<double> domain_half_width_m;
  /// Height of the vacuum and of the substrate slab; defaults to 5 (w + 2g).
  std::optional<double> domain_height_m;
  std::map<InterfaceKind, InterfaceLayer> layers = default_layers();
  int cells_per_gap = 8;

  /// 3 nm films: SM eps 11.6, SV eps 4.0, MV eps 10.0.
  static std::map<InterfaceKind, InterfaceLayer> default_layers();

  double half_width() const;
  double height() const;
  void validate() const;
  CrossSection cross_section() const;
};

/// Two plates spanning the whole (zero-flux walled) domain, separated by a uniform
/// dielectric, with an optional film on the grounded bottom plate.
struct ParallelPlateGeometry {
  double separation_m = 10e-6;
  double width_m = 40e-6;
  double plate_thickness_m = 1e-6;
  double epsilon = 11.6;
  std::optional<InterfaceLayer> bottom_layer = InterfaceLayer{3e-9, 4.0};
  int cells_across_gap = 8;

  void validate() const;
  CrossSection cross_section() const;
};

/// Which side of the interface line the sampled field cell lies on.
enum class Side { Below, Above, Left, Right };

struct BoundarySample {
  InterfaceKind kind = InterfaceKind::SubstrateMetal;
  std::string conductor;
  double x = 0.0;
  double y = 0.0;
  double length = 0.0;
  /// Squared normal field one cell inside the sampled region, (V/m)^2.
  double e_perp_sq = 0.0;
  /// Squared tangential field along the interface, (V/m)^2.
  double e_par_sq = 0.0;
  double side_epsilon = 1.0;
  Side side = Side::Above;
};

struct FieldSolution {
  std::vector<double> x;  // node coordinates, m
  std::vector<double> y;
  /// Node potentials, index i + nx * j.
  std::vector<double> potential;
  std::vector<std::array<double, 2>> e_field;
  double excitation_voltage = 0.0;
  /// Electric energy per unit length, sum over cells of eps0 eps_r |E|^2 / 2 * area (J/m).
  double total_energy = 0.0;
  double capacitance_energy = 0.0;               // 2 W / V^2, F/m
  std::optional<double> capacitance_charge;      // Q / V from the Gauss contour, F/m
  std::vector<BoundarySample> samples;
  int refinement_level = 0;
  std::size_t unknowns = 0;
  double min_step = 0.0;
  double relative_residual = 0.0;
  std::uint64_t geometry_fingerprint = 0;

  std::size_t nx() const { return x.size(); }
  std::size_t ny() const { return y.size(); }
  double phi(std::size_t i, std::size_t j) const { return potential[i + x.size() * j]; }
};

struct InterfaceParticipation {
  double total = 0.0;
  std::map<std::string, double> per_conductor;
};

struct ParticipationSet {
  std::map<InterfaceKind, InterfaceParticipation> interfaces;
  int refinement_level = 0;
  std::size_t unknowns = 0;
  double min_step = 0.0;
  /// Largest relative change against the previous refinement level; NaN for a single solve.
  double error_estimate = 0.0;

  const InterfaceParticipation& at(InterfaceKind kind) const;
  double sum() const;
};

class LinearSolveError : public std::runtime_error {
 public:
  LinearSolveError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class InterfaceNotSampledError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConvergenceStep {
  int level = 0;
  std::size_t unknowns = 0;
  double min_step = 0.0;
  double max_relative_change = 0.0;  // NaN at the first level
  ParticipationSet participations;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<ConvergenceStep> trajectory)
      : std::runtime_error(what), trajectory_(std::move(trajectory)) {}
  const std::vector<ConvergenceStep>& trajectory() const noexcept { return trajectory_; }

 private:
  std::vector<ConvergenceStep> trajectory_;
};

/// Node coordinates at `refinement_level`: every step is halved per level, the fine step
/// not below `fine_floor`.
std::array<std::vector<double>, 2> build_mesh(const CrossSection& section, int refinement_level);

/// Laplace solve with piecewise-constant permittivity. Driven conductors sit at
/// `excitation_voltage`, grounded conductors and grounded walls at 0.
FieldSolution solve_cross_section(const CrossSection& section, double excitation_voltage,
                                  int refinement_level = 0);

/// Thin-film participations from the boundary samples:
///   p_mv W/t = (1/eps_mv) int |E_v,perp|^2
///   p_sm W/t = (eps_s^2/eps_sm) int |E_s,perp|^2
///   p_sv W/t = eps_sv int |E_v,par|^2 + (1/eps_sv) int |E_v,perp|^2
/// with W and the integrands in the same eps0/2 energy convention.
ParticipationSet compute_participations(const FieldSolution& solution, const CrossSection& section);

struct RefineOptions {
  int max_level = 6;
  std::size_t max_unknowns = 1'500'000;
};

struct RefinementResult {
  ParticipationSet participations;
  std::vector<ConvergenceStep> trajectory;
  FieldSolution finest;
};

/// Halves every mesh spacing until all participations move by less than `tolerance`
/// (relative) between successive levels. tolerance must lie in (0, 0.1].
RefinementResult refine_until_converged(const CrossSection& section, double tolerance,
                                        const RefineOptions& options = {});

}  // namespace tlsloss::fieldsolver
