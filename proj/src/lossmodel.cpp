#include "tlsloss/lossmodel.hpp"

#include "tlsloss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace tlsloss::lossmodel {

void LossChannel::validate() const {
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw DomainError("loss channel '" + label + "': participation must lie in (0, 1]");
  }
  if (!(loss_tangent >= 0.0) || !std::isfinite(loss_tangent)) {
    throw DomainError("loss channel '" + label + "': loss tangent must be >= 0");
  }
}

void LossBudget::validate() const {
  if (!(q0 > 0.0) || !std::isfinite(q0)) throw DomainError("loss budget: q0 must be positive");
  std::set<std::string> seen;
  for (const auto& c : channels) {
    c.validate();
    if (!seen.insert(c.label).second) {
      throw DomainError("loss budget: duplicate channel label '" + c.label + "'");
    }
  }
}

double total_quality(const LossBudget& budget) {
  budget.validate();
  double channel_loss = 0.0;
  for (const auto& c : budget.channels) channel_loss += c.participation * c.loss_tangent;
  if (channel_loss == 0.0) return budget.q0;
  return 1.0 / (1.0 / budget.q0 + channel_loss);
}

std::vector<std::pair<std::string, double>> channel_losses(const LossBudget& budget) {
  budget.validate();
  std::vector<std::pair<std::string, double>> out;
  out.reserve(budget.channels.size());
  for (const auto& c : budget.channels) out.emplace_back(c.label, c.participation * c.loss_tangent);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

SiteLossFit fit_loss_per_site(std::span<const SitePoint> points) {
  std::set<unsigned> distinct;
  std::size_t with_sigma = 0;
  for (const auto& p : points) {
    distinct.insert(p.n_sites);
    if (!std::isfinite(p.inverse_qi)) throw PreconditionError("fit_loss_per_site: non-finite 1/Qi");
    if (p.sigma) {
      if (!(*p.sigma > 0.0) || !std::isfinite(*p.sigma)) {
        throw PreconditionError("fit_loss_per_site: sigma must be positive");
      }
      ++with_sigma;
    }
  }
  if (!points.empty() && distinct.size() == 1) {
    throw PreconditionError("fit_loss_per_site: degenerate abscissa (all points share one site count)");
  }
  if (distinct.size() < 3) {
    throw PreconditionError("fit_loss_per_site: at least 3 distinct site counts are required");
  }
  if (with_sigma != 0 && with_sigma != points.size()) {
    throw PreconditionError("fit_loss_per_site: sigma must be given for all points or none");
  }

  SiteLossFit fit;
  fit.weighted = with_sigma != 0;
  fit.n_points = points.size();
  auto weight = [&](const SitePoint& p) { return fit.weighted ? 1.0 / (*p.sigma * *p.sigma) : 1.0; };

  double sw = 0.0, mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    const double w = weight(p);
    sw += w;
    mx += w * p.n_sites;
    my += w * p.inverse_qi;
  }
  mx /= sw;
  my /= sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    const double w = weight(p);
    const double dx = p.n_sites - mx;
    const double dy = p.inverse_qi - my;
    sxx += w * dx * dx;
    sxy += w * dx * dy;
    syy += w * dy * dy;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;

  double ss_res = 0.0;
  for (const auto& p : points) {
    const double e = p.inverse_qi - (fit.intercept + fit.slope * p.n_sites);
    ss_res += weight(p) * e * e;
  }
  const double scale = fit.weighted ? 1.0 : ss_res / static_cast<double>(points.size() - 2);
  fit.slope_stderr = std::sqrt(scale / sxx);
  fit.intercept_stderr = std::sqrt(scale * (1.0 / sw + mx * mx / sxx));
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

double excess_loss(double q_device, double q_witness) {
  if (!(q_device > 0.0) || !(q_witness > 0.0)) throw DomainError("excess_loss: Q values must be positive");
  return 1.0 / q_device - 1.0 / q_witness;
}

double infer_loss_tangent(double excess, double participation) {
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw DomainError("infer_loss_tangent: participation must lie in (0, 1]");
  }
  if (!(excess >= 0.0)) throw DomainError("infer_loss_tangent: excess loss must be >= 0");
  return excess / participation;
}

double resonator_voltage_profile(double v0, double x, double length) {
  if (!(length > 0.0)) throw DomainError("resonator_voltage_profile: length must be positive");
  if (!(x >= 0.0 && x <= length)) throw DomainError("resonator_voltage_profile: x outside [0, length]");
  return v0 * std::cos(std::numbers::pi * x / (2.0 * length));
}

namespace {
void require_positive(const char* op, double c, double l, double v) {
  if (!(c > 0.0) || !(l > 0.0) || !(v > 0.0)) {
    throw DomainError(std::string(op) + ": arguments must be positive");
  }
}
}  // namespace

double resonator_energy(double c_per_length, double length, double v0) {
  require_positive("resonator_energy", c_per_length, length, v0);
  return c_per_length * length * v0 * v0 / 4.0;
}

double qubit_energy(double c_per_length, double length, double v0) {
  require_positive("qubit_energy", c_per_length, length, v0);
  return c_per_length * length * v0 * v0 / 2.0;
}

double voltage_ratio_squared(double l_qubit, double l_resonator) {
  if (!(l_qubit > 0.0) || !(l_resonator > 0.0)) throw DomainError("voltage_ratio_squared: lengths must be positive");
  return 2.0 * l_qubit / l_resonator;
}

double qubit_sensitivity_factor(double l_qubit, double l_resonator) {
  return 1.0 / voltage_ratio_squared(l_qubit, l_resonator);
}

CircuitCapacitances::CircuitCapacitances(std::map<std::string, double> values) {
  for (const auto& [label, c] : values) set(label, c);
}

CircuitCapacitances CircuitCapacitances::defaults() {
  return CircuitCapacitances({{"resonator", 338e-15},
                              {"xmon_cross", 86e-15},
                              {"junction", 4e-15},
                              {"cpw_stub", 2.27e-15},
                              {"liftoff_metal", 0.75e-15},
                              {"hooks", 0.05e-15}});
}

void CircuitCapacitances::set(const std::string& label, double farads) {
  if (!(farads > 0.0) || !std::isfinite(farads)) {
    throw DomainError("capacitance '" + label + "' must be positive");
  }
  values_[label] = farads;
}

double CircuitCapacitances::at(const std::string& label) const {
  const auto it = values_.find(label);
  if (it == values_.end()) throw ConfigError("missing capacitance '" + label + "'");
  return it->second;
}

double participation_equivalence(unsigned n_sites, const CircuitCapacitances& caps, unsigned n_qubit_electrodes) {
  if (n_sites < 1 || n_qubit_electrodes < 1) {
    throw PreconditionError("participation_equivalence: counts must be >= 1");
  }
  const double c_res = caps.at("resonator");
  const double c_qubit = caps.at("xmon_cross");
  return 2.0 * n_sites * c_qubit / (static_cast<double>(n_qubit_electrodes) * c_res);
}

}  // namespace tlsloss::lossmodel
