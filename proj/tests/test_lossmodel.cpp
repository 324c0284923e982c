#include "support.hpp"

#include "tlsloss/errors.hpp"
#include "tlsloss/lossmodel.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace tlsloss;
using namespace tlsloss::lossmodel;
using testing::rel_err;

namespace {

LossBudget random_budget(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossBudget b;
  b.q0 = testing::log_uniform(rng, 1e4, 1e8);
  const int n = static_cast<int>(u(rng) * 6);
  for (int j = 0; j < n; ++j) {
    b.channels.push_back({"c" + std::to_string(j), 1e-6 + (1.0 - 1e-6) * u(rng),
                          u(rng) < 0.2 ? 0.0 : testing::log_uniform(rng, 1e-8, 1e-2)});
  }
  return b;
}

std::vector<SitePoint> noisy_line(std::mt19937_64& rng, double intercept, double slope, double sigma) {
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<SitePoint> pts;
  for (const unsigned n : {0u, 1u, 2u, 4u, 7u}) {
    for (int r = 0; r < 4; ++r) pts.push_back({n, intercept + slope * n + noise(rng), sigma});
  }
  return pts;
}

}  // namespace

TEST_SUITE("lossmodel") {

TEST_CASE("total quality examples") {
  CHECK(total_quality({2.5e6, {}}) == 2.5e6);
  const LossBudget sites{2.5e6, {{"sites", 1.0, 7.0 * 7.91e-7}}};
  CHECK(total_quality(sites) == doctest::Approx(168435.2367).epsilon(1e-9));
  const LossBudget xmon{2.5e6, {{"junction_region", 1e-3, 7e-3}}};
  CHECK(total_quality(xmon) == doctest::Approx(135135.1351).epsilon(1e-9));
}

TEST_CASE("budget invariants are enforced") {
  CHECK_THROWS_AS(total_quality({0.0, {}}), DomainError);
  CHECK_THROWS_AS(total_quality({1e6, {{"a", 0.0, 1e-3}}}), DomainError);
  CHECK_THROWS_AS(total_quality({1e6, {{"a", 1.5, 1e-3}}}), DomainError);
  CHECK_THROWS_AS(total_quality({1e6, {{"a", 0.5, -1e-3}}}), DomainError);
  CHECK_THROWS_AS(total_quality({1e6, {{"a", 0.5, 1e-3}, {"a", 0.1, 1e-3}}}), DomainError);
}

TEST_CASE("total quality never exceeds q0 and only falls as losses grow") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    auto b = random_budget(rng);
    const double q = total_quality(b);
    bool lossless = true;
    for (const auto& c : b.channels) lossless = lossless && c.loss_tangent == 0.0;
    if (lossless) {
      CHECK(q == b.q0);
    } else {
      CHECK(q < b.q0);
    }
    if (b.channels.empty()) continue;
    auto& c = b.channels[static_cast<std::size_t>(u(rng) * b.channels.size())];
    c.participation = c.participation + (1.0 - c.participation) * u(rng);
    c.loss_tangent *= 1.0 + u(rng);
    CHECK(total_quality(b) <= q);
  }
}

TEST_CASE("channel losses are sorted largest first") {
  const LossBudget b{1e6, {{"a", 0.1, 1e-4}, {"b", 0.5, 1e-3}, {"c", 0.2, 5e-5}}};
  const auto losses = channel_losses(b);
  REQUIRE(losses.size() == 3);
  CHECK(losses[0].first == "b");
  CHECK(losses[1].first == "a");
  CHECK(losses[2].first == "c");
  CHECK(losses[0].second == doctest::Approx(5e-4));
}

TEST_CASE("exact line is recovered") {
  std::vector<SitePoint> pts;
  for (const unsigned n : {0u, 1u, 2u, 4u, 7u}) pts.push_back({n, 4e-7 + 7.91e-7 * n, std::nullopt});
  const auto fit = fit_loss_per_site(pts);
  CHECK(rel_err(fit.slope, 7.91e-7) < 1e-12);
  CHECK(rel_err(fit.intercept, 4e-7) < 1e-12);
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.slope_stderr >= 0.0);
  CHECK_FALSE(fit.weighted);
  CHECK(fit.n_points == 5);
}

TEST_CASE("slope uncertainty covers the truth") {
  int within = 0;
  for (int s = 0; s < 200; ++s) {
    std::mt19937_64 rng(1000 + s);
    const auto fit = fit_loss_per_site(noisy_line(rng, 4e-7, 7.91e-7, 5e-8));
    CHECK(fit.weighted);
    CHECK(fit.r_squared >= 0.0);
    CHECK(fit.r_squared <= 1.0);
    if (std::abs(fit.slope - 7.91e-7) <= 3.0 * fit.slope_stderr) ++within;
  }
  CHECK(within >= 194);
}

TEST_CASE("regression preconditions") {
  const std::vector<SitePoint> same{{2, 1e-6, {}}, {2, 2e-6, {}}, {2, 3e-6, {}}};
  CHECK_THROWS_AS(fit_loss_per_site(same), PreconditionError);
  const std::vector<SitePoint> two{{1, 1e-6, {}}, {2, 2e-6, {}}, {2, 2.1e-6, {}}};
  CHECK_THROWS_AS(fit_loss_per_site(two), PreconditionError);
  const std::vector<SitePoint> mixed{{1, 1e-6, 1e-7}, {2, 2e-6, {}}, {3, 3e-6, 1e-7}};
  CHECK_THROWS_AS(fit_loss_per_site(mixed), PreconditionError);
  const std::vector<SitePoint> bad_sigma{{1, 1e-6, 0.0}, {2, 2e-6, 1e-7}, {3, 3e-6, 1e-7}};
  CHECK_THROWS_AS(fit_loss_per_site(bad_sigma), PreconditionError);
}

TEST_CASE("loss tangent inference") {
  CHECK(infer_loss_tangent(0.0, 0.5) == 0.0);
  const double excess = excess_loss(2e5, 2e6);
  CHECK(excess == doctest::Approx(4.5e-6).epsilon(1e-12));
  CHECK(infer_loss_tangent(excess, 6.4e-4) == doctest::Approx(0.00703125).epsilon(1e-12));
  CHECK_THROWS_AS(infer_loss_tangent(1e-6, 0.0), DomainError);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double p = u(rng);
    const double d = testing::log_uniform(rng, 1e-8, 1e-1);
    CHECK(rel_err(infer_loss_tangent(p * d, p), d) < 4e-16);
  }
}

TEST_CASE("voltage profile") {
  CHECK(resonator_voltage_profile(2.0, 0.0, 1.0) == 2.0);
  CHECK(std::abs(resonator_voltage_profile(2.0, 1.0, 1.0)) < 1e-15);
  CHECK(resonator_voltage_profile(2.0, 0.5, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(resonator_voltage_profile(1.0, 1.1, 1.0), DomainError);
  CHECK_THROWS_AS(resonator_voltage_profile(1.0, -0.1, 1.0), DomainError);
}

TEST_CASE("resonator energy matches quadrature of the standing wave") {
  CHECK(resonator_energy(1.0, 1.0, 2.0) == 1.0);
  CHECK(resonator_energy(1.6e-10, 5e-3, 2.0) == doctest::Approx(4.0 * resonator_energy(1.6e-10, 5e-3, 1.0)));
  const double c = 1.6e-10, len = 5e-3, v0 = 0.7;
  const int n = 10000;
  const double h = len / (n - 1);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = resonator_voltage_profile(v0, std::min(i * h, len), len);
    sum += (i == 0 || i == n - 1 ? 0.5 : 1.0) * 0.5 * c * v * v;
  }
  CHECK(rel_err(sum * h, resonator_energy(c, len, v0)) < 1e-8);
}

TEST_CASE("qubit energy") {
  CHECK(qubit_energy(1.0, 1.0, 1.0) == 0.5);
  CHECK(qubit_energy(1.6e-10, 640e-6, 0.3) == doctest::Approx(2.0 * resonator_energy(1.6e-10, 640e-6, 0.3)));
}

TEST_CASE("voltage ratio") {
  CHECK(voltage_ratio_squared(640e-6, 5000e-6) == doctest::Approx(0.256).epsilon(1e-14));
  CHECK(voltage_ratio_squared(0.5, 1.0) == 1.0);
  CHECK(qubit_sensitivity_factor(640e-6, 5000e-6) == doctest::Approx(3.90625).epsilon(1e-14));
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const double a = testing::log_uniform(rng, 1e-6, 1e-2);
    const double b = testing::log_uniform(rng, 1e-6, 1e-2);
    const double s = testing::log_uniform(rng, 1e-3, 1e3);
    CHECK(rel_err(voltage_ratio_squared(a * s, b * s), voltage_ratio_squared(a, b)) < 1e-15);
  }
  // Equal stored energy reproduces the same ratio.
  const double c = 1.6e-10, vq = 1.0;
  const double vr = std::sqrt(qubit_energy(c, 640e-6, vq) * 4.0 / (c * 5000e-6));
  CHECK((vr / vq) * (vr / vq) == doctest::Approx(voltage_ratio_squared(640e-6, 5000e-6)));
}

TEST_CASE("participation equivalence") {
  const auto caps = CircuitCapacitances::defaults();
  CHECK(caps.at("resonator") == doctest::Approx(338e-15));
  CHECK(caps.at("xmon_cross") == doctest::Approx(86e-15));
  CHECK(participation_equivalence(4, caps, 2) == doctest::Approx(1.017751479).epsilon(1e-9));
  CHECK(participation_equivalence(8, caps, 2) == doctest::Approx(2.0 * participation_equivalence(4, caps, 2)));
  CircuitCapacitances missing({{"resonator", 338e-15}});
  CHECK_THROWS_AS(participation_equivalence(4, missing, 2), ConfigError);
  CHECK_THROWS_AS(participation_equivalence(0, caps, 2), PreconditionError);
  CHECK_THROWS_AS(CircuitCapacitances({{"resonator", -1.0}}), DomainError);
}

}  // TEST_SUITE
