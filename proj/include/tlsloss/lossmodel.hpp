#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tlsloss::lossmodel {

/// One lossy region: a fraction `participation` of the electric energy in a dielectric
/// with loss tangent `loss_tangent`.
struct LossChannel {
  std::string label;
  double participation = 0.0;
  double loss_tangent = 0.0;

  void validate() const;
};

struct LossBudget {
  double q0 = 0.0;
  std::vector<LossChannel> channels;

  void validate() const;
};

/// 1/Q_tot = 1/q0 + sum_j p_j delta_j.
double total_quality(const LossBudget& budget);

/// Per-channel loss p_j * delta_j, largest first. Ties keep file order.
std::vector<std::pair<std::string, double>> channel_losses(const LossBudget& budget);

struct SitePoint {
  unsigned n_sites = 0;
  double inverse_qi = 0.0;
  std::optional<double> sigma;
};

struct SiteLossFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
  double r_squared = 0.0;
  bool weighted = false;
  std::size_t n_points = 0;
};

/// Straight line 1/Qi = intercept + slope * n_sites.
///
/// When every point carries a sigma the fit is weighted by 1/sigma^2 and the standard
/// errors come from (X^T W X)^-1 with the sigmas taken as absolute. Without sigmas the
/// residual variance scales (X^T X)^-1. Needs at least three distinct site counts.
SiteLossFit fit_loss_per_site(std::span<const SitePoint> points);

/// 1/Q_device - 1/Q_witness.
double excess_loss(double q_device, double q_witness);

/// excess_loss / participation.
double infer_loss_tangent(double excess_loss, double participation);

/// Standing-wave voltage of a quarter-wave resonator, open end at x = 0.
double resonator_voltage_profile(double v0, double x, double length);

/// Capacitive energy of the quarter-wave resonator, C_L L V0^2 / 4.
double resonator_energy(double c_per_length, double length, double v0);

/// Capacitive energy of a short CPW capacitor at uniform voltage, C_L L V^2 / 2.
double qubit_energy(double c_per_length, double length, double v0);

/// (V_R/V_Q)^2 at equal stored energy: 2 L_Q / L_R.
double voltage_ratio_squared(double l_qubit, double l_resonator);

/// Reciprocal of voltage_ratio_squared: how much more a qubit electrode loses than the
/// same electrode on a resonator anti-node.
double qubit_sensitivity_factor(double l_qubit, double l_resonator);

/// Lumped capacitances in farads, keyed by element label.
class CircuitCapacitances {
 public:
  CircuitCapacitances() = default;
  explicit CircuitCapacitances(std::map<std::string, double> values);

  /// resonator 338 fF, xmon_cross 86 fF, junction 4 fF, cpw_stub 2.27 fF,
  /// liftoff_metal 0.75 fF, hooks 0.05 fF.
  static CircuitCapacitances defaults();

  void set(const std::string& label, double farads);
  /// Throws ConfigError when the label is missing.
  double at(const std::string& label) const;
  const std::map<std::string, double>& values() const noexcept { return values_; }

 private:
  std::map<std::string, double> values_;
};

/// Site participation of an `n_sites` resonator divided by the electrode participation of
/// a qubit with `n_qubit_electrodes` electrodes. Sites sit at the resonator anti-node, so a
/// site of capacitance C_s holds C_s V0^2/2 against the resonator's C_res V0^2/4, while a
/// qubit electrode holds C_s V^2/2 against C_q V^2/2:
///   ratio = 2 n_sites C_q / (n_qubit_electrodes C_res).
double participation_equivalence(unsigned n_sites, const CircuitCapacitances& caps,
                                 unsigned n_qubit_electrodes);

}  // namespace tlsloss::lossmodel
