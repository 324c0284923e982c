#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlsloss::resonance {

using Complex = std::complex<double>;

/// Frequency-ordered complex transmission samples of one notch-type resonator measurement.
///
/// Construction enforces the sample invariants: equal lengths, at least two points,
/// strictly increasing frequencies, finite values and non-negative line attenuation.
class ComplexTrace {
 public:
  ComplexTrace(std::vector<double> frequencies_hz, std::vector<Complex> s21,
               std::optional<double> drive_power_dbm = std::nullopt, double line_attenuation_db = 0.0,
               std::string label = {});

  /// Accepts samples in any order (e.g. a downward sweep) and sorts them by frequency.
  static ComplexTrace from_unordered(std::vector<double> frequencies_hz, std::vector<Complex> s21,
                                     std::optional<double> drive_power_dbm = std::nullopt,
                                     double line_attenuation_db = 0.0, std::string label = {});

  std::span<const double> frequencies() const noexcept { return frequencies_; }
  std::span<const Complex> s21() const noexcept { return s21_; }
  std::size_t size() const noexcept { return frequencies_.size(); }

  const std::optional<double>& drive_power_dbm() const noexcept { return drive_power_dbm_; }
  double line_attenuation_db() const noexcept { return line_attenuation_db_; }
  const std::string& label() const noexcept { return label_; }

  void set_drive_power_dbm(std::optional<double> p) { drive_power_dbm_ = p; }
  void set_line_attenuation_db(double db);
  void set_label(std::string label) { label_ = std::move(label); }

  /// Copy of the samples in [begin, end).
  ComplexTrace slice(std::size_t begin, std::size_t end) const;

 private:
  std::vector<double> frequencies_;
  std::vector<Complex> s21_;
  std::optional<double> drive_power_dbm_;
  double line_attenuation_db_ = 0.0;
  std::string label_;
};

/// Resonator parameters of the inverse-transmission model plus the cable environment
/// env_amplitude * exp(i (env_phase - 2 pi f env_delay)) that multiplies S21.
struct ResonanceFit {
  double f0 = 0.0;       // Hz
  double qi = 0.0;
  double qc_star = 0.0;
  double phi = 0.0;      // rad
  double env_amplitude = 1.0;
  double env_phase = 0.0;  // rad
  double env_delay = 0.0;  // s

  /// Covariance of (f0, qi, qc_star, phi). Zero for a bare guess.
  Eigen::Matrix4d param_covariance = Eigen::Matrix4d::Zero();
  double residual_rms = 0.0;
  int n_iterations = 0;
  /// Set when the normal matrix at the optimum is close to singular.
  bool degenerate = false;
  std::vector<std::string> warnings;

  double f0_stderr() const;
  double qi_stderr() const;
  double qc_star_stderr() const;
  double phi_stderr() const;
  double loaded_q() const { return 1.0 / (1.0 / qi + 1.0 / qc_star); }

  /// Throws DomainError unless f0, qi, qc_star > 0 and |phi| < pi.
  void validate() const;
};

class NoResonanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnidentifiableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitDivergedError : public std::runtime_error {
 public:
  FitDivergedError(const std::string& what, ResonanceFit last)
      : std::runtime_error(what), last_iterate_(std::move(last)) {}
  const ResonanceFit& last_iterate() const noexcept { return last_iterate_; }

 private:
  ResonanceFit last_iterate_;
};

struct FitOptions {
  int max_iterations = 200;
  /// Stop once an accepted step lowers the cost by less than this fraction.
  double relative_cost_tolerance = 1e-12;
  double initial_damping = 1e-3;
  /// Reciprocal condition number of the scaled normal matrix below which the fit is rejected.
  double unidentifiable_rcond = 1e-14;
  /// Reciprocal condition number below which a successful fit is flagged `degenerate`.
  double degenerate_rcond = 1e-10;
};

/// 1 + (Qi/Qc*) e^{i phi} / (1 + 2i Qi (f - f0)/f0).
Complex model_inverse_s21(double f0, double qi, double qc_star, double phi, double f);

/// Full forward model including the environment factor.
Complex model_s21(const ResonanceFit& p, double f);

/// Evenly spaced grid of `n_points` covering f0 +/- `half_span_linewidths` * f0/Ql.
std::vector<double> linewidth_grid(double f0, double loaded_q, std::size_t n_points,
                                   double half_span_linewidths);

/// Samples the forward model and adds i.i.d. Gaussian noise of `noise_sigma` per quadrature.
ComplexTrace synthesize_trace(const ResonanceFit& p, std::span<const double> frequencies_hz,
                              double noise_sigma, std::uint64_t rng_seed);

/// Starting point for the least-squares fit. Throws NoResonanceError when no dip stands
/// out of the noise.
ResonanceFit initial_guess(const ComplexTrace& trace);

/// Damped least-squares fit of all seven model parameters to the complex samples.
ResonanceFit fit_trace(const ComplexTrace& trace, const FitOptions& options = {});

/// Root-mean-square complex residual of `p` against the trace.
double residual_rms(const ResonanceFit& p, const ComplexTrace& trace);

}  // namespace tlsloss::resonance
