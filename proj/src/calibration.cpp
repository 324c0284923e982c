#include "tlsloss/calibration.hpp"

#include "tlsloss/constants.hpp"
#include "tlsloss/errors.hpp"

#include <cmath>
#include <numbers>

namespace tlsloss::calibration {

void LineCalibration::validate() const {
  if (!(z0_ohm > 0.0) || !(c_per_length_f_per_m > 0.0) || !(resonator_length_m > 0.0)) {
    throw DomainError("calibration: Z0, C_L and L_R must be positive");
  }
  if (!(line_attenuation_db >= 0.0)) {
    throw DomainError("calibration: line attenuation must be >= 0 dB");
  }
}

double loaded_q(double qi, double qc_star) {
  if (!(qi > 0.0) || !(qc_star > 0.0)) {
    throw DomainError("loaded_q: Qi and Qc* must be positive");
  }
  return 1.0 / (1.0 / qi + 1.0 / qc_star);
}

double drive_power_watts(double drive_power_dbm, double line_attenuation_db) {
  return std::pow(10.0, (drive_power_dbm - line_attenuation_db - 30.0) / 10.0);
}

double mean_photon_number(const resonance::ResonanceFit& fit, const LineCalibration& cal,
                          double drive_power_dbm) {
  fit.validate();
  cal.validate();
  const double ql = loaded_q(fit.qi, fit.qc_star);
  const double p_drive = drive_power_watts(drive_power_dbm, cal.line_attenuation_db);
  const double energy = (4.0 * cal.z0_ohm / std::numbers::pi) * (ql * ql / fit.qc_star) *
                        cal.c_per_length_f_per_m * cal.resonator_length_m * p_drive;
  return energy / (constants::planck * fit.f0);
}

double qi_from_t1(double t1_s, double f_hz) {
  if (!(t1_s >= 0.0)) throw DomainError("qi_from_t1: T1 must be >= 0");
  if (!(f_hz > 0.0)) throw DomainError("qi_from_t1: frequency must be positive");
  return 2.0 * std::numbers::pi * f_hz * t1_s;
}

double t1_from_qi(double qi, double f_hz) {
  if (!(qi >= 0.0)) throw DomainError("t1_from_qi: Qi must be >= 0");
  if (!(f_hz > 0.0)) throw DomainError("t1_from_qi: frequency must be positive");
  return qi / (2.0 * std::numbers::pi * f_hz);
}

}  // namespace tlsloss::calibration
