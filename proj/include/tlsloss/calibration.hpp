#pragma once

#include "tlsloss/resonance.hpp"

namespace tlsloss::calibration {

/// CPW line and resonator constants needed to turn drive power into photon number.
struct LineCalibration {
  double z0_ohm = 50.0;
  /// Not measured by default; 1.6e-10 F/m is typical of a 24/24 um CPW on silicon.
  double c_per_length_f_per_m = 1.6e-10;
  /// Quarter-wave resonator at ~6 GHz on silicon.
  double resonator_length_m = 5.0e-3;
  double line_attenuation_db = 0.0;

  void validate() const;
};

/// (1/Qi + 1/Qc*)^-1.
double loaded_q(double qi, double qc_star);

/// Drive power at the resonator after `line_attenuation_db`, in watts.
double drive_power_watts(double drive_power_dbm, double line_attenuation_db);

/// Mean intra-resonator photon number
///   <n> = (4 Z0 / pi) (Ql^2 / Qc*) C_L L_R P / (h f0)
/// with P the drive power at the coupler. `drive_power_dbm` may be -infinity.
double mean_photon_number(const resonance::ResonanceFit& fit, const LineCalibration& cal,
                          double drive_power_dbm);

/// Qi = 2 pi f T1.
double qi_from_t1(double t1_s, double f_hz);
double t1_from_qi(double qi, double f_hz);

}  // namespace tlsloss::calibration
