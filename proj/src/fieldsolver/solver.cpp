#include "tlsloss/constants.hpp"
#include "tlsloss/errors.hpp"
#include "tlsloss/fieldsolver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace tlsloss::fieldsolver {
namespace {

enum class Material { Vacuum, Substrate, Metal };

struct Cell {
  Material material = Material::Vacuum;
  double epsilon = 1.0;
  int conductor = -1;
};

bool contains_open(const Rect& r, double x, double y) { return x > r.x0 && x < r.x1 && y > r.y0 && y < r.y1; }

bool contains_closed(const Rect& r, double x, double y, double tol) {
  return x >= r.x0 - tol && x <= r.x1 + tol && y >= r.y0 - tol && y <= r.y1 + tol;
}

double distance_to(const Rect& r, double x, double y) {
  const double dx = std::max({0.0, r.x0 - x, x - r.x1});
  const double dy = std::max({0.0, r.y0 - y, y - r.y1});
  return std::hypot(dx, dy);
}

class Grid {
 public:
  Grid(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {}
  std::size_t nx() const { return x_.size(); }
  std::size_t ny() const { return y_.size(); }
  std::size_t node(std::size_t i, std::size_t j) const { return i + nx() * j; }
  std::size_t cell(std::size_t i, std::size_t j) const { return i + (nx() - 1) * j; }
  double hx(std::size_t i) const { return x_[i + 1] - x_[i]; }
  double hy(std::size_t j) const { return y_[j + 1] - y_[j]; }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
};

std::vector<Cell> classify_cells(const CrossSection& cs, const Grid& g) {
  std::vector<Cell> cells((g.nx() - 1) * (g.ny() - 1));
  for (std::size_t j = 0; j + 1 < g.ny(); ++j) {
    const double yc = 0.5 * (g.y()[j] + g.y()[j + 1]);
    for (std::size_t i = 0; i + 1 < g.nx(); ++i) {
      const double xc = 0.5 * (g.x()[i] + g.x()[i + 1]);
      Cell& c = cells[g.cell(i, j)];
      for (std::size_t k = 0; k < cs.conductors.size(); ++k) {
        if (contains_open(cs.conductors[k].shape, xc, yc)) {
          c = {Material::Metal, 0.0, static_cast<int>(k)};
          break;
        }
      }
      if (c.material == Material::Metal) continue;
      for (const auto& d : cs.dielectrics) {
        if (contains_open(d.shape, xc, yc)) c = {Material::Substrate, d.epsilon, -1};
      }
    }
  }
  return cells;
}

// Dirichlet value per node, NaN for unknowns.
std::vector<double> fixed_potentials(const CrossSection& cs, const Grid& g, double v) {
  const double tol = 1e-9 * std::max(cs.domain.x1 - cs.domain.x0, cs.domain.y1 - cs.domain.y0);
  std::vector<double> fixed(g.nx() * g.ny(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < g.ny(); ++j) {
    for (std::size_t i = 0; i < g.nx(); ++i) {
      const double x = g.x()[i];
      const double y = g.y()[j];
      double& f = fixed[g.node(i, j)];
      for (const auto& c : cs.conductors) {
        if (contains_closed(c.shape, x, y, tol)) {
          f = c.potential_scale * v;
          break;
        }
      }
      if (!std::isnan(f)) continue;
      const bool on_side[4] = {i == 0, i + 1 == g.nx(), j == 0, j + 1 == g.ny()};
      for (int s = 0; s < 4; ++s) {
        if (on_side[s] && cs.boundary[s] == BoundaryCondition::Grounded) f = 0.0;
      }
    }
  }
  return fixed;
}

// The four cell edges as (node a, node b, coupling) of the box-integration stencil.
template <typename Fn>
void for_each_cell_edge(const Grid& g, const std::vector<Cell>& cells, Fn&& fn) {
  for (std::size_t j = 0; j + 1 < g.ny(); ++j) {
    for (std::size_t i = 0; i + 1 < g.nx(); ++i) {
      const Cell& c = cells[g.cell(i, j)];
      if (c.material == Material::Metal) continue;
      const double hx = g.hx(i);
      const double hy = g.hy(j);
      const double cx = c.epsilon * 0.5 * hy / hx;
      const double cy = c.epsilon * 0.5 * hx / hy;
      fn(g.node(i, j), g.node(i + 1, j), cx);
      fn(g.node(i, j + 1), g.node(i + 1, j + 1), cx);
      fn(g.node(i, j), g.node(i, j + 1), cy);
      fn(g.node(i + 1, j), g.node(i + 1, j + 1), cy);
    }
  }
}

double gauss_charge(const Rect& contour, const Grid& g, const std::vector<Cell>& cells,
                    const std::vector<std::array<double, 2>>& e) {
  auto nearest = [](const std::vector<double>& v, double t) {
    const auto it = std::lower_bound(v.begin(), v.end(), t);
    if (it == v.begin()) return std::size_t{0};
    if (it == v.end()) return v.size() - 1;
    return (t - *(it - 1) <= *it - t) ? static_cast<std::size_t>(it - v.begin() - 1)
                                      : static_cast<std::size_t>(it - v.begin());
  };
  const std::size_t i0 = nearest(g.x(), contour.x0), i1 = nearest(g.x(), contour.x1);
  const std::size_t j0 = nearest(g.y(), contour.y0), j1 = nearest(g.y(), contour.y1);
  // Nodal permittivity: mean over the non-metal cells touching the node.
  auto node_eps = [&](std::size_t i, std::size_t j) {
    double sum = 0.0;
    int n = 0;
    for (int di = -1; di <= 0; ++di) {
      for (int dj = -1; dj <= 0; ++dj) {
        const auto ci = static_cast<long>(i) + di;
        const auto cj = static_cast<long>(j) + dj;
        if (ci < 0 || cj < 0 || ci + 1 >= static_cast<long>(g.nx()) || cj + 1 >= static_cast<long>(g.ny())) continue;
        const Cell& c = cells[g.cell(static_cast<std::size_t>(ci), static_cast<std::size_t>(cj))];
        if (c.material == Material::Metal) continue;
        sum += c.epsilon;
        ++n;
      }
    }
    return n ? sum / n : 0.0;
  };
  auto flux = [&](std::size_t i, std::size_t j, double nx, double ny) {
    const auto& f = e[g.node(i, j)];
    return node_eps(i, j) * (f[0] * nx + f[1] * ny);
  };
  double q = 0.0;
  for (std::size_t j = j0; j < j1; ++j) {
    const double h = g.hy(j);
    q += 0.5 * h * (flux(i1, j, 1, 0) + flux(i1, j + 1, 1, 0));
    q += 0.5 * h * (flux(i0, j, -1, 0) + flux(i0, j + 1, -1, 0));
  }
  for (std::size_t i = i0; i < i1; ++i) {
    const double h = g.hx(i);
    q += 0.5 * h * (flux(i, j1, 0, 1) + flux(i + 1, j1, 0, 1));
    q += 0.5 * h * (flux(i, j0, 0, -1) + flux(i + 1, j0, 0, -1));
  }
  return constants::vacuum_permittivity * q;
}

void collect_samples(const CrossSection& cs, const Grid& g, const std::vector<Cell>& cells,
                     const std::vector<double>& phi, std::vector<BoundarySample>& out) {
  auto nearest_conductor = [&](double x, double y) {
    std::size_t best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cs.conductors.size(); ++k) {
      const double d = distance_to(cs.conductors[k].shape, x, y);
      if (d < dist) {
        dist = d;
        best = k;
      }
    }
    return best;
  };
  // a = cell below/left of the edge, b = cell above/right. Fills kind, conductor and
  // side_epsilon; returns true when the field is sampled in b. Metal-bounded films see
  // the dielectric side, substrate-vacuum films the vacuum side.
  auto classify = [&](const Cell& a, const Cell& b, BoundarySample& s) {
    bool sample_b = false;
    if (a.material == Material::Metal || b.material == Material::Metal) {
      const bool metal_a = a.material == Material::Metal;
      const Cell& metal = metal_a ? a : b;
      const Cell& other = metal_a ? b : a;
      s.kind = other.material == Material::Vacuum ? InterfaceKind::MetalVacuum : InterfaceKind::SubstrateMetal;
      s.conductor = cs.conductors[static_cast<std::size_t>(metal.conductor)].label;
      sample_b = metal_a;
    } else {
      s.kind = InterfaceKind::SubstrateVacuum;
      s.conductor = cs.conductors[nearest_conductor(s.x, s.y)].label;
      sample_b = b.material == Material::Vacuum;
    }
    s.side_epsilon = sample_b ? b.epsilon : a.epsilon;
    return sample_b;
  };

  // Horizontal interface lines.
  for (std::size_t j = 1; j + 1 < g.ny(); ++j) {
    for (std::size_t i = 0; i + 1 < g.nx(); ++i) {
      const Cell& below = cells[g.cell(i, j - 1)];
      const Cell& above = cells[g.cell(i, j)];
      if (below.material == above.material) continue;
      BoundarySample s;
      s.x = 0.5 * (g.x()[i] + g.x()[i + 1]);
      s.y = g.y()[j];
      s.length = g.hx(i);
      const bool up = classify(below, above, s);
      s.side = up ? Side::Above : Side::Below;
      const std::size_t jo = up ? j + 1 : j - 1;
      const double h = up ? g.hy(j) : g.hy(j - 1);
      const double d0 = (phi[g.node(i, j)] - phi[g.node(i, jo)]) / h;
      const double d1 = (phi[g.node(i + 1, j)] - phi[g.node(i + 1, jo)]) / h;
      s.e_perp_sq = 0.5 * (d0 * d0 + d1 * d1);
      const double t = (phi[g.node(i + 1, j)] - phi[g.node(i, j)]) / g.hx(i);
      s.e_par_sq = t * t;
      out.push_back(std::move(s));
    }
  }
  // Vertical interface lines.
  for (std::size_t i = 1; i + 1 < g.nx(); ++i) {
    for (std::size_t j = 0; j + 1 < g.ny(); ++j) {
      const Cell& left = cells[g.cell(i - 1, j)];
      const Cell& right = cells[g.cell(i, j)];
      if (left.material == right.material) continue;
      BoundarySample s;
      s.x = g.x()[i];
      s.y = 0.5 * (g.y()[j] + g.y()[j + 1]);
      s.length = g.hy(j);
      const bool to_right = classify(left, right, s);
      s.side = to_right ? Side::Right : Side::Left;
      const std::size_t io = to_right ? i + 1 : i - 1;
      const double h = to_right ? g.hx(i) : g.hx(i - 1);
      const double d0 = (phi[g.node(i, j)] - phi[g.node(io, j)]) / h;
      const double d1 = (phi[g.node(i, j + 1)] - phi[g.node(io, j + 1)]) / h;
      s.e_perp_sq = 0.5 * (d0 * d0 + d1 * d1);
      const double t = (phi[g.node(i, j + 1)] - phi[g.node(i, j)]) / g.hy(j);
      s.e_par_sq = t * t;
      out.push_back(std::move(s));
    }
  }
}

}  // namespace

FieldSolution solve_cross_section(const CrossSection& cs, double excitation_voltage, int refinement_level) {
  cs.validate();
  if (!std::isfinite(excitation_voltage) || excitation_voltage == 0.0) {
    throw PreconditionError("solve_cross_section: excitation voltage must be finite and non-zero");
  }
  auto [xs, ys] = build_mesh(cs, refinement_level);
  const Grid g(std::move(xs), std::move(ys));
  const auto cells = classify_cells(cs, g);
  const auto fixed = fixed_potentials(cs, g, excitation_voltage);

  std::vector<long> index(fixed.size(), -1);
  long n_free = 0;
  for (std::size_t k = 0; k < fixed.size(); ++k) {
    if (std::isnan(fixed[k])) index[k] = n_free++;
  }
  if (n_free == static_cast<long>(fixed.size())) {
    throw PreconditionError("solve_cross_section: no fixed potentials; the problem is singular");
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n_free) * 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_free);
  for_each_cell_edge(g, cells, [&](std::size_t a, std::size_t b, double c) {
    const long ia = index[a], ib = index[b];
    if (ia >= 0) {
      triplets.emplace_back(ia, ia, c);
      if (ib >= 0) {
        triplets.emplace_back(ia, ib, -c);
      } else {
        rhs(ia) += c * fixed[b];
      }
    }
    if (ib >= 0) {
      triplets.emplace_back(ib, ib, c);
      if (ia >= 0) {
        triplets.emplace_back(ib, ia, -c);
      } else {
        rhs(ib) += c * fixed[a];
      }
    }
  });
  Eigen::SparseMatrix<double> a(n_free, n_free);
  a.setFromTriplets(triplets.begin(), triplets.end());
  triplets.clear();
  triplets.shrink_to_fit();

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> solver;
  solver.compute(a);
  if (solver.info() != Eigen::Success) {
    throw LinearSolveError("linear solve failed: factorization did not succeed", std::nan(""));
  }
  const Eigen::VectorXd sol = solver.solve(rhs);
  const double rhs_norm = rhs.norm();
  const double residual = (a * sol - rhs).norm() / (rhs_norm > 0.0 ? rhs_norm : 1.0);
  if (solver.info() != Eigen::Success || !std::isfinite(residual) || residual > 1e-8) {
    throw LinearSolveError("linear solve failed: relative residual " + std::to_string(residual), residual);
  }

  FieldSolution out;
  out.excitation_voltage = excitation_voltage;
  out.refinement_level = refinement_level;
  out.unknowns = static_cast<std::size_t>(n_free);
  out.relative_residual = residual;
  out.geometry_fingerprint = cs.fingerprint();
  out.potential.resize(fixed.size());
  for (std::size_t k = 0; k < fixed.size(); ++k) out.potential[k] = index[k] >= 0 ? sol(index[k]) : fixed[k];
  const auto& phi = out.potential;

  double energy = 0.0;
  for_each_cell_edge(g, cells, [&](std::size_t p, std::size_t q, double c) {
    const double d = phi[q] - phi[p];
    energy += c * d * d;
  });
  out.total_energy = 0.5 * constants::vacuum_permittivity * energy;
  out.capacitance_energy = 2.0 * out.total_energy / (excitation_voltage * excitation_voltage);

  out.e_field.resize(fixed.size());
  for (std::size_t j = 0; j < g.ny(); ++j) {
    for (std::size_t i = 0; i < g.nx(); ++i) {
      auto along = [&](const std::vector<double>& c, std::size_t k, auto value) {
        if (k == 0) return (value(1) - value(0)) / (c[1] - c[0]);
        if (k + 1 == c.size()) return (value(k) - value(k - 1)) / (c[k] - c[k - 1]);
        const double hm = c[k] - c[k - 1];
        const double hp = c[k + 1] - c[k];
        return (hm * hm * (value(k + 1) - value(k)) + hp * hp * (value(k) - value(k - 1))) / (hm * hp * (hm + hp));
      };
      out.e_field[g.node(i, j)] = {-along(g.x(), i, [&](std::size_t k) { return phi[g.node(k, j)]; }),
                                   -along(g.y(), j, [&](std::size_t k) { return phi[g.node(i, k)]; })};
    }
  }
  if (cs.gauss_contour) {
    out.capacitance_charge = gauss_charge(*cs.gauss_contour, g, cells, out.e_field) / excitation_voltage;
  }
  collect_samples(cs, g, cells, phi, out.samples);

  out.min_step = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < g.nx(); ++i) out.min_step = std::min(out.min_step, g.hx(i));
  for (std::size_t j = 0; j + 1 < g.ny(); ++j) out.min_step = std::min(out.min_step, g.hy(j));
  out.x = g.x();
  out.y = g.y();
  return out;
}

}  // namespace tlsloss::fieldsolver
