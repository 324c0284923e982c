#include "tlsloss/errors.hpp"
#include "tlsloss/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace tlsloss::resonance {

namespace {

void check_samples(const std::vector<double>& f, const std::vector<Complex>& s) {
  if (f.size() != s.size()) {
    throw PreconditionError("trace: frequency and s21 arrays differ in length");
  }
  if (f.size() < 2) {
    throw PreconditionError("trace: at least 2 samples are required");
  }
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!std::isfinite(f[k]) || !std::isfinite(s[k].real()) || !std::isfinite(s[k].imag())) {
      throw PreconditionError("trace: non-finite sample at index " + std::to_string(k));
    }
    if (k > 0 && !(f[k] > f[k - 1])) {
      throw PreconditionError("trace: frequencies must be strictly increasing (index " +
                              std::to_string(k) + ")");
    }
  }
}

}  // namespace

ComplexTrace::ComplexTrace(std::vector<double> frequencies_hz, std::vector<Complex> s21,
                           std::optional<double> drive_power_dbm, double line_attenuation_db,
                           std::string label)
    : frequencies_(std::move(frequencies_hz)),
      s21_(std::move(s21)),
      drive_power_dbm_(drive_power_dbm),
      label_(std::move(label)) {
  check_samples(frequencies_, s21_);
  set_line_attenuation_db(line_attenuation_db);
}

ComplexTrace ComplexTrace::from_unordered(std::vector<double> frequencies_hz, std::vector<Complex> s21,
                                          std::optional<double> drive_power_dbm,
                                          double line_attenuation_db, std::string label) {
  if (frequencies_hz.size() != s21.size()) {
    throw PreconditionError("trace: frequency and s21 arrays differ in length");
  }
  std::vector<std::size_t> order(frequencies_hz.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frequencies_hz[a] < frequencies_hz[b]; });
  std::vector<double> f(order.size());
  std::vector<Complex> s(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    f[k] = frequencies_hz[order[k]];
    s[k] = s21[order[k]];
  }
  return ComplexTrace(std::move(f), std::move(s), drive_power_dbm, line_attenuation_db, std::move(label));
}

void ComplexTrace::set_line_attenuation_db(double db) {
  if (!(db >= 0.0) || !std::isfinite(db)) {
    throw PreconditionError("trace: line attenuation must be finite and >= 0 dB");
  }
  line_attenuation_db_ = db;
}

ComplexTrace ComplexTrace::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) {
    throw PreconditionError("trace: invalid slice");
  }
  return ComplexTrace({frequencies_.begin() + begin, frequencies_.begin() + end},
                      {s21_.begin() + begin, s21_.begin() + end}, drive_power_dbm_, line_attenuation_db_,
                      label_);
}

double ResonanceFit::f0_stderr() const { return std::sqrt(std::max(0.0, param_covariance(0, 0))); }
double ResonanceFit::qi_stderr() const { return std::sqrt(std::max(0.0, param_covariance(1, 1))); }
double ResonanceFit::qc_star_stderr() const { return std::sqrt(std::max(0.0, param_covariance(2, 2))); }
double ResonanceFit::phi_stderr() const { return std::sqrt(std::max(0.0, param_covariance(3, 3))); }

void ResonanceFit::validate() const {
  if (!(f0 > 0.0) || !(qi > 0.0) || !(qc_star > 0.0)) {
    throw DomainError("resonance fit: f0, Qi and Qc* must be positive");
  }
  if (!(std::abs(phi) < std::numbers::pi)) {
    throw DomainError("resonance fit: |phi| must be below pi");
  }
}

Complex model_inverse_s21(double f0, double qi, double qc_star, double phi, double f) {
  if (!(f0 > 0.0) || !(qi > 0.0) || !(qc_star > 0.0)) {
    throw DomainError("model_inverse_s21: f0, Qi and Qc* must be positive");
  }
  const Complex denom(1.0, 2.0 * qi * (f - f0) / f0);
  return 1.0 + (qi / qc_star) * std::polar(1.0, phi) / denom;
}

Complex model_s21(const ResonanceFit& p, double f) {
  const Complex env = std::polar(p.env_amplitude, p.env_phase - 2.0 * std::numbers::pi * f * p.env_delay);
  return env / model_inverse_s21(p.f0, p.qi, p.qc_star, p.phi, f);
}

std::vector<double> linewidth_grid(double f0, double loaded_q, std::size_t n_points,
                                   double half_span_linewidths) {
  if (n_points < 2 || !(f0 > 0.0) || !(loaded_q > 0.0) || !(half_span_linewidths > 0.0)) {
    throw PreconditionError("linewidth_grid: invalid arguments");
  }
  const double half = half_span_linewidths * f0 / loaded_q;
  std::vector<double> f(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    f[k] = f0 - half + 2.0 * half * static_cast<double>(k) / static_cast<double>(n_points - 1);
  }
  return f;
}

ComplexTrace synthesize_trace(const ResonanceFit& p, std::span<const double> frequencies_hz,
                              double noise_sigma, std::uint64_t rng_seed) {
  if (!(noise_sigma >= 0.0)) {
    throw PreconditionError("synthesize_trace: noise_sigma must be >= 0");
  }
  p.validate();
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> f(frequencies_hz.begin(), frequencies_hz.end());
  std::vector<Complex> s(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    s[k] = model_s21(p, f[k]);
    if (noise_sigma > 0.0) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      s[k] += noise_sigma * Complex(re, im);
    }
  }
  return ComplexTrace(std::move(f), std::move(s));
}

double residual_rms(const ResonanceFit& p, const ComplexTrace& trace) {
  double sum = 0.0;
  const auto f = trace.frequencies();
  const auto s = trace.s21();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    sum += std::norm(model_s21(p, f[k]) - s[k]);
  }
  return std::sqrt(sum / static_cast<double>(trace.size()));
}

}  // namespace tlsloss::resonance
