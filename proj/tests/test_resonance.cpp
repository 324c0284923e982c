#include "support.hpp"

#include "tlsloss/errors.hpp"
#include "tlsloss/resonance.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace tlsloss;
using namespace tlsloss::resonance;
using testing::rel_err;

namespace {

ResonanceFit params(double f0, double qi, double qc, double phi) {
  ResonanceFit p;
  p.f0 = f0;
  p.qi = qi;
  p.qc_star = qc;
  p.phi = phi;
  return p;
}

ResonanceFit random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto p = params(4e9 + 4e9 * u(rng), testing::log_uniform(rng, 1e5, 5e6), testing::log_uniform(rng, 1e5, 2e6),
                  -1.0 + 2.0 * u(rng));
  p.env_amplitude = 0.3 + 1.2 * u(rng);
  p.env_phase = -3.0 + 6.0 * u(rng);
  p.env_delay = 60e-9 * u(rng);
  return p;
}

ComplexTrace standard_trace(const ResonanceFit& p, double noise, std::uint64_t seed, std::size_t n = 401) {
  const auto f = linewidth_grid(p.f0, p.loaded_q(), n, 5.0);
  return synthesize_trace(p, f, noise, seed);
}

double core_error(const ResonanceFit& a, const ResonanceFit& b) {
  return std::max({rel_err(a.f0, b.f0), rel_err(a.qi, b.qi), rel_err(a.qc_star, b.qc_star),
                   std::abs(a.phi - b.phi) / std::max(std::abs(b.phi), 1e-3)});
}

}  // namespace

TEST_SUITE("resonance") {

TEST_CASE("inverse model matches closed-form points") {
  const Complex far = model_inverse_s21(6e9, 1e6, 1e6, 0.0, 1e12);
  CHECK(std::abs(far - 1.0) < 1e-5);

  const Complex on = model_inverse_s21(6e9, 1e6, 1e6, 0.0, 6e9);
  CHECK(on.real() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(on.imag()) < 1e-15);
  CHECK(std::abs(1.0 / on - 0.5) < 1e-15);

  const double f_half = 6e9 * (1.0 + 1.0 / 2e6);
  const Complex half = model_inverse_s21(6e9, 1e6, 1e6, 0.0, f_half);
  CHECK(std::abs(half - Complex(1.5, -0.5)) < 1e-9);
}

TEST_CASE("inverse model at f0 equals 1 + (Qi/Qc*) e^{i phi}") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const auto p = random_params(rng);
    const Complex got = model_inverse_s21(p.f0, p.qi, p.qc_star, p.phi, p.f0);
    const Complex want = 1.0 + (p.qi / p.qc_star) * std::polar(1.0, p.phi);
    CHECK(std::abs(got - want) <= 1e-14 * std::abs(want));
  }
}

TEST_CASE("inverse model rejects non-positive parameters") {
  CHECK_THROWS_AS(model_inverse_s21(0.0, 1e6, 1e6, 0.0, 6e9), DomainError);
  CHECK_THROWS_AS(model_inverse_s21(6e9, -1.0, 1e6, 0.0, 6e9), DomainError);
  CHECK_THROWS_AS(model_inverse_s21(6e9, 1e6, 0.0, 0.0, 6e9), DomainError);
}

TEST_CASE("symmetric resonance has its |S21| minimum at f0") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    auto p = random_params(rng);
    p.phi = 0.0;
    p.env_amplitude = 1.0;
    p.env_phase = 0.0;
    p.env_delay = 0.0;
    const auto f = linewidth_grid(p.f0, p.loaded_q(), 20001, 10.0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (std::abs(model_s21(p, f[i])) < std::abs(model_s21(p, f[best]))) best = i;
    }
    CHECK(std::abs(f[best] - p.f0) <= 0.5 * (f[1] - f[0]));
  }
}

TEST_CASE("noiseless synthesis with a neutral environment is the exact inverse model") {
  const auto p = params(6e9, 1e6, 4e5, 0.3);
  const auto f = linewidth_grid(p.f0, p.loaded_q(), 101, 5.0);
  const auto tr = synthesize_trace(p, f, 0.0, 1);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Complex want = 1.0 / model_inverse_s21(p.f0, p.qi, p.qc_star, p.phi, f[i]);
    CHECK(std::abs(tr.s21()[i] - want) <= 1e-15);
  }
}

TEST_CASE("synthesis is deterministic per seed") {
  const auto p = params(5e9, 5e5, 5e5, -0.2);
  const auto a = standard_trace(p, 1e-3, 99);
  const auto b = standard_trace(p, 1e-3, 99);
  const auto c = standard_trace(p, 1e-3, 100);
  CHECK(std::equal(a.s21().begin(), a.s21().end(), b.s21().begin()));
  CHECK_FALSE(std::equal(a.s21().begin(), a.s21().end(), c.s21().begin()));
  CHECK_THROWS_AS(standard_trace(p, -1.0, 1), PreconditionError);
}

TEST_CASE("trace invariants are enforced") {
  CHECK_THROWS_AS(ComplexTrace({1.0, 2.0}, {Complex(1.0)}), PreconditionError);
  CHECK_THROWS_AS(ComplexTrace({1.0}, {Complex(1.0)}), PreconditionError);
  CHECK_THROWS_AS(ComplexTrace({2.0, 1.0}, {Complex(1.0), Complex(1.0)}), PreconditionError);
  CHECK_THROWS_AS(ComplexTrace({1.0, 1.0}, {Complex(1.0), Complex(1.0)}), PreconditionError);
  CHECK_THROWS_AS(ComplexTrace({1.0, 2.0}, {Complex(1.0), Complex(std::nan(""))}), PreconditionError);
  CHECK_THROWS_AS(ComplexTrace({1.0, 2.0}, {Complex(1.0), Complex(1.0)}, std::nullopt, -1.0), PreconditionError);
  const auto sorted = ComplexTrace::from_unordered({3.0, 1.0, 2.0}, {Complex(3.0), Complex(1.0), Complex(2.0)});
  CHECK(sorted.frequencies()[0] == 1.0);
  CHECK(sorted.s21()[2] == Complex(3.0));
}

TEST_CASE("initial guess on a noiseless trace lands within half a step of f0") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 50; ++k) {
    const auto p = random_params(rng);
    const auto tr = standard_trace(p, 0.0, 0);
    const auto g = initial_guess(tr);
    const double step = tr.frequencies()[1] - tr.frequencies()[0];
    CHECK(std::abs(g.f0 - p.f0) <= 0.5 * step);
  }
}

TEST_CASE("flat trace has no resonance") {
  std::vector<double> f(101);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 6e9 + 1e3 * static_cast<double>(i);
  const ComplexTrace flat(f, std::vector<Complex>(f.size(), Complex(1.0, 0.0)));
  CHECK_THROWS_AS(initial_guess(flat), NoResonanceError);
  CHECK_THROWS_AS(fit_trace(flat), NoResonanceError);
}

TEST_CASE("depth 0.5 symmetric dip gives Qi close to Qc*") {
  const auto p = params(6e9, 7e5, 7e5, 0.0);
  const auto tr = standard_trace(p, 0.0, 0);
  CHECK(std::abs(std::abs(tr.s21()[200]) - 0.5) < 1e-3);
  const auto g = initial_guess(tr);
  CHECK(g.qi / g.qc_star == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("too few samples are a precondition error") {
  const auto p = params(6e9, 1e6, 1e6, 0.0);
  const auto tr = standard_trace(p, 0.0, 0, 7);
  CHECK_THROWS_AS(initial_guess(tr), PreconditionError);
  CHECK_THROWS_AS(fit_trace(tr), PreconditionError);
}

TEST_CASE("noiseless round trip recovers the core parameters") {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 200; ++k) {
    const auto p = random_params(rng);
    const auto fit = fit_trace(standard_trace(p, 0.0, 0));
    CHECK(core_error(fit, p) < 1e-6);
  }
}

TEST_CASE("noisy fit recovers Qi within 1 percent") {
  auto p = params(5.8e9, 2e6, 5e5, 0.1);
  const auto fit = fit_trace(standard_trace(p, 1e-3, 5));
  CHECK(rel_err(fit.qi, p.qi) < 0.01);
  CHECK(fit.qi_stderr() > 0.0);
}

TEST_CASE("reported Qi uncertainty covers the truth") {
  auto p = params(6e9, 1e6, 5e5, 0.25);
  p.env_amplitude = 0.7;
  p.env_phase = 2.0;
  p.env_delay = 35e-9;
  int within = 0;
  for (int s = 0; s < 100; ++s) {
    const auto fit = fit_trace(standard_trace(p, 1e-3, 500 + s));
    if (std::abs(fit.qi - p.qi) <= 3.0 * fit.qi_stderr()) ++within;
  }
  CHECK(within >= 97);
}

TEST_CASE("fit never ends worse than its starting point") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 30; ++k) {
    const auto p = random_params(rng);
    const auto tr = standard_trace(p, 2e-3, 40 + k);
    const auto fit = fit_trace(tr);
    CHECK(fit.residual_rms <= residual_rms(initial_guess(tr), tr) * (1.0 + 1e-12));
    CHECK_NOTHROW(fit.validate());
  }
}

TEST_CASE("a constant complex factor only moves the environment terms") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const auto p = random_params(rng);
    const auto tr = standard_trace(p, 0.0, 0);
    const Complex factor = std::polar(0.37, 2.1);
    std::vector<double> f(tr.frequencies().begin(), tr.frequencies().end());
    std::vector<Complex> s(tr.s21().begin(), tr.s21().end());
    for (auto& v : s) v *= factor;
    const auto a = fit_trace(tr);
    const auto b = fit_trace(ComplexTrace(f, s));
    CHECK(core_error(b, a) < 1e-9);
    CHECK(b.env_amplitude / a.env_amplitude == doctest::Approx(0.37).epsilon(1e-9));
  }
}

TEST_CASE("reversed sample order gives the same fit") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 10; ++k) {
    const auto p = random_params(rng);
    const auto tr = standard_trace(p, 1e-3, 70 + k);
    std::vector<double> f(tr.frequencies().rbegin(), tr.frequencies().rend());
    std::vector<Complex> s(tr.s21().rbegin(), tr.s21().rend());
    const auto a = fit_trace(tr);
    const auto b = fit_trace(ComplexTrace::from_unordered(f, s));
    CHECK(core_error(b, a) < 1e-12);
  }
}

TEST_CASE("one-sided data is rejected or flagged") {
  const auto p = params(6e9, 1e6, 5e5, 0.4);
  const auto tr = standard_trace(p, 1e-4, 3);
  const auto half = tr.slice(0, 195);
  bool rejected = false;
  try {
    const auto fit = fit_trace(half);
    rejected = fit.degenerate;
  } catch (const UnidentifiableError&) {
    rejected = true;
  }
  CHECK(rejected);
}

TEST_CASE("the deepest of several dips is fitted and the rest reported") {
  const auto main = params(6e9, 1e6, 2e5, 0.0);
  const auto side = params(6e9 * (1.0 + 6.0 / main.loaded_q()), 1e6, 2e6, 0.0);
  const auto f = linewidth_grid(main.f0, main.loaded_q(), 801, 10.0);
  std::vector<Complex> s;
  for (const double x : f) s.push_back(model_s21(main, x) * model_s21(side, x));
  const auto fit = fit_trace(ComplexTrace(f, s));
  CHECK(rel_err(fit.f0, main.f0) < 1e-7);
  CHECK(rel_err(fit.qc_star, main.qc_star) < 0.05);
  CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("iteration cap reports divergence with the last iterate") {
  const auto p = params(6e9, 1e6, 5e5, 0.5);
  auto tr = standard_trace(p, 3e-3, 17);
  FitOptions opts;
  opts.max_iterations = 1;
  try {
    fit_trace(tr, opts);
    FAIL("expected FitDivergedError");
  } catch (const FitDivergedError& e) {
    CHECK(e.last_iterate().qi > 0.0);
    CHECK(std::string(e.what()).find("fit diverged") != std::string::npos);
  }
}

}  // TEST_SUITE
