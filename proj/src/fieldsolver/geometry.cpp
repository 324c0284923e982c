#include "tlsloss/errors.hpp"
#include "tlsloss/fieldsolver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace tlsloss::fieldsolver {

std::string_view to_string(InterfaceKind kind) {
  switch (kind) {
    case InterfaceKind::SubstrateMetal:
      return "sm";
    case InterfaceKind::SubstrateVacuum:
      return "sv";
    case InterfaceKind::MetalVacuum:
      return "mv";
  }
  return "?";
}

namespace {

bool valid_rect(const Rect& r) { return r.x1 > r.x0 && r.y1 > r.y0; }

bool inside(const Rect& inner, const Rect& outer) {
  return inner.x0 >= outer.x0 && inner.x1 <= outer.x1 && inner.y0 >= outer.y0 && inner.y1 <= outer.y1;
}

bool overlap(const Rect& a, const Rect& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

}  // namespace

void CrossSection::validate() const {
  if (!valid_rect(domain)) throw PreconditionError("cross section: empty domain");
  if (conductors.empty()) throw PreconditionError("cross section: no conductors");
  bool driven = false;
  for (std::size_t a = 0; a < conductors.size(); ++a) {
    const auto& c = conductors[a];
    if (!valid_rect(c.shape) || !inside(c.shape, domain)) {
      throw PreconditionError("cross section: conductor '" + c.label + "' is empty or leaves the domain");
    }
    driven = driven || c.potential_scale != 0.0;
    for (std::size_t b = a + 1; b < conductors.size(); ++b) {
      if (overlap(c.shape, conductors[b].shape)) {
        throw PreconditionError("cross section: conductors '" + c.label + "' and '" + conductors[b].label +
                                "' overlap");
      }
    }
  }
  if (!driven) throw PreconditionError("cross section: no conductor is driven");
  for (const auto& d : dielectrics) {
    if (!valid_rect(d.shape) || !inside(d.shape, domain)) {
      throw PreconditionError("cross section: dielectric region is empty or leaves the domain");
    }
    if (!(d.epsilon >= 1.0)) throw PreconditionError("cross section: permittivity must be >= 1");
  }
  for (const auto& [kind, layer] : layers) {
    if (!(layer.thickness_m > 0.0) || !(layer.epsilon >= 1.0)) {
      throw PreconditionError("cross section: layer '" + std::string(to_string(kind)) +
                              "' needs thickness > 0 and permittivity >= 1");
    }
  }
  if (!(mesh.fine_step > 0.0) || !(mesh.coarse_step > 0.0) || !(mesh.far_step > 0.0) || !(mesh.grading > 0.0)) {
    throw PreconditionError("cross section: mesh steps and grading must be positive");
  }
  if (gauss_contour && (!valid_rect(*gauss_contour) || !inside(*gauss_contour, domain))) {
    throw PreconditionError("cross section: Gauss contour must be a rectangle inside the domain");
  }
}

std::uint64_t CrossSection::fingerprint() const {
  // FNV-1a over every number and label that influences the solution.
  std::uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ull;
    }
  };
  auto mix = [&](double v) { mix_bytes(&v, sizeof v); };
  auto mix_rect = [&](const Rect& r) {
    mix(r.x0);
    mix(r.x1);
    mix(r.y0);
    mix(r.y1);
  };
  mix_rect(domain);
  for (const auto bc : boundary) mix(static_cast<double>(bc));
  for (const auto& c : conductors) {
    mix_bytes(c.label.data(), c.label.size());
    mix_rect(c.shape);
    mix(c.potential_scale);
  }
  for (const auto& d : dielectrics) {
    mix_rect(d.shape);
    mix(d.epsilon);
  }
  mix(mesh.fine_step);
  mix(mesh.coarse_step);
  mix(mesh.far_step);
  mix(mesh.grading);
  mix(mesh.fine_floor);
  mix_rect(mesh.structure);
  for (double f : mesh.x_foci) mix(f);
  for (double f : mesh.y_foci) mix(f);
  mix(mesh.mirror_x.value_or(std::nan("")));
  for (const auto& c : film_conductors) mix_bytes(c.data(), c.size() + 1);
  return h;
}

std::map<InterfaceKind, InterfaceLayer> CpwGeometry::default_layers() {
  return {{InterfaceKind::SubstrateMetal, {3e-9, 11.6}},
          {InterfaceKind::SubstrateVacuum, {3e-9, 4.0}},
          {InterfaceKind::MetalVacuum, {3e-9, 10.0}}};
}

double CpwGeometry::half_width() const {
  return domain_half_width_m.value_or(center_width_m / 2.0 + gap_m + 5.0 * (center_width_m + 2.0 * gap_m));
}

double CpwGeometry::height() const { return domain_height_m.value_or(5.0 * (center_width_m + 2.0 * gap_m)); }

void CpwGeometry::validate() const {
  if (!(center_width_m > 0.0) || !(gap_m > 0.0) || !(metal_thickness_m > 0.0)) {
    throw PreconditionError("cpw: width, gap and metal thickness must be positive");
  }
  if (!(substrate_epsilon >= 1.0)) throw PreconditionError("cpw: substrate permittivity must be >= 1");
  const double span = center_width_m + 2.0 * gap_m;
  const double margin = 5.0 * span;
  if (half_width() - (center_width_m / 2.0 + gap_m) < margin * (1.0 - 1e-12)) {
    throw PreconditionError("cpw: domain half-width must leave a margin of 5 (w + 2g) beyond the gaps");
  }
  if (height() < margin * (1.0 - 1e-12)) {
    throw PreconditionError("cpw: domain height must be at least 5 (w + 2g)");
  }
  if (cells_per_gap < 2) throw PreconditionError("cpw: cells_per_gap must be >= 2");
  for (const auto& [kind, layer] : layers) {
    if (!(layer.thickness_m > 0.0) || !(layer.epsilon >= 1.0)) {
      throw PreconditionError("cpw: layer '" + std::string(to_string(kind)) +
                              "' needs thickness > 0 and permittivity >= 1");
    }
    // Films are post-processed, never meshed; they must be far below the metal scale.
    if (layer.thickness_m > 0.1 * std::min(metal_thickness_m, gap_m)) {
      throw PreconditionError("cpw: layer '" + std::string(to_string(kind)) +
                              "' is too thick to be treated as a thin film");
    }
  }
}

CrossSection CpwGeometry::cross_section() const {
  validate();
  const double w2 = center_width_m / 2.0;
  const double edge = w2 + gap_m;
  const double hw = half_width();
  const double h = height();
  const double t = metal_thickness_m;

  CrossSection cs;
  cs.domain = {-hw, hw, -h, t + h};
  cs.conductors = {{"center", {-w2, w2, 0.0, t}, 1.0},
                   {"ground", {-hw, -edge, 0.0, t}, 0.0},
                   {"ground", {edge, hw, 0.0, t}, 0.0}};
  cs.dielectrics = {{{-hw, hw, -h, 0.0}, substrate_epsilon}};
  cs.layers = layers;
  cs.mesh.coarse_step = gap_m / cells_per_gap;
  cs.mesh.far_step = (center_width_m + 2.0 * gap_m) / 2.0;
  cs.mesh.grading = 0.25;
  // Corner fields are resolved down to the film scale and no further.
  for (const auto& [kind, layer] : layers) cs.mesh.fine_floor = std::max(cs.mesh.fine_floor, layer.thickness_m);
  cs.mesh.fine_step = layers.empty() ? t / 2.0 : cs.mesh.fine_floor;
  cs.mesh.structure = {-edge, edge, 0.0, t};
  cs.mesh.x_foci = {-edge, -w2, w2, edge};
  cs.mesh.y_foci = {0.0, t};
  cs.mesh.mirror_x = 0.0;
  const double half_gap = gap_m / 2.0;
  cs.gauss_contour = Rect{-(w2 + half_gap), w2 + half_gap, -half_gap, t + half_gap};
  return cs;
}

void ParallelPlateGeometry::validate() const {
  if (!(separation_m > 0.0) || !(width_m > 0.0) || !(plate_thickness_m > 0.0)) {
    throw PreconditionError("parallel plate: separation, width and plate thickness must be positive");
  }
  if (!(epsilon >= 1.0)) throw PreconditionError("parallel plate: permittivity must be >= 1");
  if (cells_across_gap < 2) throw PreconditionError("parallel plate: cells_across_gap must be >= 2");
  if (bottom_layer && (!(bottom_layer->thickness_m > 0.0) || !(bottom_layer->epsilon >= 1.0) ||
                       bottom_layer->thickness_m > 0.1 * separation_m)) {
    throw PreconditionError("parallel plate: film must be thin, with permittivity >= 1");
  }
}

CrossSection ParallelPlateGeometry::cross_section() const {
  validate();
  const double hw = width_m / 2.0;
  const double d = separation_m;
  const double tp = plate_thickness_m;
  CrossSection cs;
  cs.domain = {-hw, hw, -tp, d + tp};
  cs.boundary = {BoundaryCondition::ZeroFlux, BoundaryCondition::ZeroFlux, BoundaryCondition::Grounded,
                 BoundaryCondition::Grounded};
  cs.conductors = {{"bottom", {-hw, hw, -tp, 0.0}, 0.0}, {"top", {-hw, hw, d, d + tp}, 1.0}};
  cs.dielectrics = {{{-hw, hw, 0.0, d}, epsilon}};
  if (bottom_layer) cs.layers[InterfaceKind::SubstrateMetal] = *bottom_layer;
  cs.film_conductors = {"bottom"};
  const double step = d / cells_across_gap;
  cs.mesh.fine_step = step;
  cs.mesh.coarse_step = step;
  cs.mesh.far_step = step;
  cs.mesh.grading = 0.25;
  cs.mesh.structure = cs.domain;
  cs.gauss_contour = Rect{-hw, hw, d / 2.0, d + tp};
  return cs;
}

const InterfaceParticipation& ParticipationSet::at(InterfaceKind kind) const {
  const auto it = interfaces.find(kind);
  if (it == interfaces.end()) {
    throw InterfaceNotSampledError("interface '" + std::string(to_string(kind)) + "' not computed");
  }
  return it->second;
}

double ParticipationSet::sum() const {
  double s = 0.0;
  for (const auto& [kind, p] : interfaces) s += p.total;
  return s;
}

}  // namespace tlsloss::fieldsolver
