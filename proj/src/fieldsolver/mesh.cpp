#include "tlsloss/errors.hpp"
#include "tlsloss/fieldsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tlsloss::fieldsolver {
namespace {


struct AxisSpec {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> breaks;
  std::vector<double> foci;
  double structure_lo = 0.0;
  double structure_hi = 0.0;
};

double local_step(double s, const AxisSpec& axis, const MeshSettings& m) {
  const double d_struct = std::max({0.0, axis.structure_lo - s, s - axis.structure_hi});
  double h = std::min(m.far_step, m.coarse_step + m.grading * d_struct);
  for (const double f : axis.foci) h = std::min(h, m.fine_step + m.grading * std::abs(s - f));
  return h;
}

// Nodes strictly inside (a, b), equidistributed in the measure ds / h(s).
void fill_interval(double a, double b, const AxisSpec& axis, const MeshSettings& m, std::vector<double>& out) {
  std::vector<double> s{a};
  std::vector<double> cum{0.0};
  double pos = a;
  double total = 0.0;
  while (pos < b) {
    const double ds = std::min(0.25 * local_step(pos, axis, m), b - pos);
    total += ds / local_step(pos + 0.5 * ds, axis, m);
    pos = (b - pos - ds) < 1e-12 * (b - a) ? b : pos + ds;
    s.push_back(pos);
    cum.push_back(total);
  }
  const auto cells = static_cast<std::size_t>(std::max(1.0, std::ceil(total - 1e-9)));
  std::size_t seg = 0;
  for (std::size_t k = 1; k < cells; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(cells);
    while (seg + 1 < cum.size() && cum[seg + 1] < target) ++seg;
    const double t = (target - cum[seg]) / (cum[seg + 1] - cum[seg]);
    out.push_back(s[seg] + t * (s[seg + 1] - s[seg]));
  }
}

std::vector<double> build_axis(AxisSpec axis, const MeshSettings& m, std::optional<double> mirror) {
  const double tol = 1e-12 * (axis.hi - axis.lo);
  axis.breaks.push_back(axis.lo);
  axis.breaks.push_back(axis.hi);
  if (mirror) axis.breaks.push_back(*mirror);
  std::sort(axis.breaks.begin(), axis.breaks.end());
  std::vector<double> breaks;
  for (const double b : axis.breaks) {
    if (b < axis.lo - tol || b > axis.hi + tol) continue;
    if (breaks.empty() || b - breaks.back() > tol) breaks.push_back(std::clamp(b, axis.lo, axis.hi));
  }
  const double start = mirror ? *mirror : axis.lo;
  std::vector<double> nodes;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    if (breaks[k + 1] <= start + tol) continue;
    nodes.push_back(breaks[k]);
    fill_interval(breaks[k], breaks[k + 1], axis, m, nodes);
  }
  nodes.push_back(breaks.back());
  if (!mirror) return nodes;
  std::vector<double> full;
  full.reserve(2 * nodes.size());
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (*it > *mirror + tol) full.push_back(2.0 * *mirror - *it);
  }
  full.insert(full.end(), nodes.begin(), nodes.end());
  return full;
}

}  // namespace

std::array<std::vector<double>, 2> build_mesh(const CrossSection& section, int refinement_level) {
  if (refinement_level < 0) throw PreconditionError("build_mesh: negative refinement level");
  AxisSpec ax{section.domain.x0, section.domain.x1, {}, section.mesh.x_foci, section.mesh.structure.x0,
              section.mesh.structure.x1};
  AxisSpec ay{section.domain.y0, section.domain.y1, {}, section.mesh.y_foci, section.mesh.structure.y0,
              section.mesh.structure.y1};
  auto add_rect = [&](const Rect& r) {
    ax.breaks.insert(ax.breaks.end(), {r.x0, r.x1});
    ay.breaks.insert(ay.breaks.end(), {r.y0, r.y1});
  };
  for (const auto& c : section.conductors) add_rect(c.shape);
  for (const auto& d : section.dielectrics) add_rect(d.shape);
  if (section.mesh.mirror_x) {
    // Mirror the breakpoints so both halves see the same intervals.
    const double m = *section.mesh.mirror_x;
    const auto n = ax.breaks.size();
    for (std::size_t k = 0; k < n; ++k) ax.breaks.push_back(2.0 * m - ax.breaks[k]);
  }
  MeshSettings m = section.mesh;
  const double scale = std::ldexp(1.0, -refinement_level);
  m.fine_step = std::max(m.fine_step * scale, std::min(m.fine_floor, m.fine_step));
  m.coarse_step *= scale;
  m.far_step *= scale;
  return {build_axis(ax, m, m.mirror_x), build_axis(ay, m, std::nullopt)};
}

}  // namespace tlsloss::fieldsolver
