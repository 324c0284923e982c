#include "guess_detail.hpp"

#include "tlsloss/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>

namespace tlsloss::resonance {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kParams = 7;
using Vec7 = Eigen::Matrix<double, kParams, 1>;
using Mat7 = Eigen::Matrix<double, kParams, kParams>;

// Internal coordinates, all O(1) near the optimum:
//   u   = (f0/f_ref - 1) * ql_ref          resonance offset in linewidths
//   lnQi, lnQc, phi
//   lnA, theta = phase at f_ref, v = 2 pi f_ref tau / ql_ref
// Frequencies enter only through xi = (f/f_ref - 1) * ql_ref.
struct Problem {
  double f_ref = 0.0;
  double ql_ref = 0.0;
  std::vector<double> xi;
  std::vector<Complex> s;
};

Problem make_problem(const ComplexTrace& trace, const ResonanceFit& guess) {
  Problem p;
  p.f_ref = guess.f0;
  p.ql_ref = guess.loaded_q();
  const auto f = trace.frequencies();
  p.xi.resize(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) p.xi[k] = (f[k] - p.f_ref) / p.f_ref * p.ql_ref;
  p.s.assign(trace.s21().begin(), trace.s21().end());
  return p;
}

Vec7 pack(const Problem& pr, const ResonanceFit& g) {
  Vec7 th;
  const double delay_phase = kTwoPi * pr.f_ref * g.env_delay;
  th << (g.f0 / pr.f_ref - 1.0) * pr.ql_ref, std::log(g.qi), std::log(g.qc_star), g.phi,
      std::log(g.env_amplitude), std::remainder(g.env_phase - delay_phase, kTwoPi), delay_phase / pr.ql_ref;
  return th;
}

ResonanceFit unpack(const Problem& pr, const Vec7& th) {
  ResonanceFit g;
  g.f0 = pr.f_ref * (1.0 + th(0) / pr.ql_ref);
  g.qi = std::exp(th(1));
  g.qc_star = std::exp(th(2));
  g.phi = std::remainder(th(3), kTwoPi);
  g.env_amplitude = std::exp(th(4));
  g.env_delay = th(6) * pr.ql_ref / (kTwoPi * pr.f_ref);
  g.env_phase = std::remainder(th(5) + th(6) * pr.ql_ref, kTwoPi);
  return g;
}

// Residuals stacked as [Re r_0, Im r_0, Re r_1, ...]. Returns +inf cost on invalid parameters.
double evaluate(const Problem& pr, const Vec7& th, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
  const std::size_t n = pr.xi.size();
  r.resize(2 * static_cast<Eigen::Index>(n));
  if (jac) jac->resize(2 * static_cast<Eigen::Index>(n), kParams);
  const double u = th(0);
  const double denom_scale = pr.ql_ref + u;
  if (!(denom_scale > 0.0) || !th.allFinite()) return std::numeric_limits<double>::infinity();
  const double qi = std::exp(th(1));
  const Complex coupling = std::exp(th(1) - th(2)) * std::polar(1.0, th(3));
  const double amp = std::exp(th(4));
  for (std::size_t k = 0; k < n; ++k) {
    const double xi = pr.xi[k];
    const double y = 2.0 * qi * (xi - u) / denom_scale;
    const Complex d(1.0, y);
    const Complex cd = coupling / d;
    const Complex inv = 1.0 + cd;
    const Complex env = std::polar(amp, th(5) - th(6) * xi);
    const Complex m = env / inv;
    const Complex res = m - pr.s[k];
    const auto row = static_cast<Eigen::Index>(2 * k);
    r(row) = res.real();
    r(row + 1) = res.imag();
    if (jac) {
      const Complex dm_dinv = -m / inv;
      const Complex i(0.0, 1.0);
      const double dy_du = -2.0 * qi * (pr.ql_ref + xi) / (denom_scale * denom_scale);
      const Complex cols[kParams] = {
          dm_dinv * (-cd / d * i * dy_du),
          dm_dinv * (cd - cd / d * i * y),
          dm_dinv * (-cd),
          dm_dinv * (i * cd),
          m,
          i * m,
          -i * xi * m,
      };
      for (int c = 0; c < kParams; ++c) {
        (*jac)(row, c) = cols[c].real();
        (*jac)(row + 1, c) = cols[c].imag();
      }
    }
  }
  const double cost = 0.5 * r.squaredNorm();
  return std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
}

struct LmResult {
  Vec7 theta;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

LmResult levenberg_marquardt(const Problem& pr, const Vec7& start, const FitOptions& opt) {
  LmResult out;
  out.theta = start;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  out.cost = evaluate(pr, out.theta, r, &jac);
  if (!std::isfinite(out.cost)) return out;
  // Exact data: the cost cannot drop meaningfully below rounding noise.
  const double floor_cost = 1e-30 * static_cast<double>(pr.xi.size());
  double lambda = opt.initial_damping;
  double nu = 2.0;
  Eigen::VectorXd r_new;
  Eigen::MatrixXd jac_new;
  while (out.iterations < opt.max_iterations) {
    ++out.iterations;
    if (out.cost <= floor_cost) {
      out.converged = true;
      break;
    }
    const Mat7 a = jac.transpose() * jac;
    const Vec7 g = jac.transpose() * r;
    const Vec7 diag = a.diagonal().cwiseMax(1e-300);
    Mat7 damped = a;
    damped.diagonal() += lambda * diag;
    const Vec7 step = damped.ldlt().solve(-g);
    const Vec7 trial = out.theta + step;
    const double cost_new = step.allFinite() ? evaluate(pr, trial, r_new, nullptr)
                                             : std::numeric_limits<double>::infinity();
    const double predicted = 0.5 * step.dot(lambda * diag.cwiseProduct(step) - g);
    if (cost_new < out.cost && predicted > 0.0) {
      const double rho = (out.cost - cost_new) / predicted;
      const double relative = (out.cost - cost_new) / out.cost;
      out.theta = trial;
      out.cost = evaluate(pr, out.theta, r, &jac);
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      if (relative < opt.relative_cost_tolerance ||
          step.norm() <= 1e-15 * (out.theta.norm() + 1e-15)) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e30) {
        // No descent direction left at working precision: a stationary point.
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace

ResonanceFit fit_trace(const ComplexTrace& trace, const FitOptions& options) {
  const detail::GuessReport guess = detail::analyze(trace);
  if (!guess.bracketed) {
    throw UnidentifiableError(
        "unidentifiable parameters: the dip minimum lies at the edge of the trace, so only one side of "
        "the resonance was measured");
  }
  const ComplexTrace window = trace.slice(guess.window_begin, guess.window_end);

  std::vector<const ResonanceFit*> starts{&guess.best()};
  if (guess.refined) starts.push_back(&guess.heuristic);

  std::optional<LmResult> best;
  std::optional<Problem> best_problem;
  ResonanceFit last_iterate;
  int total_iterations = 0;
  for (const ResonanceFit* start : starts) {
    Problem pr = make_problem(window, *start);
    LmResult res = levenberg_marquardt(pr, pack(pr, *start), options);
    total_iterations += res.iterations;
    if (!res.converged) {
      if (!best) last_iterate = unpack(pr, res.theta);
      continue;
    }
    if (!best || res.cost < best->cost) {
      best = res;
      best_problem = std::move(pr);
    }
    if (start == starts.front()) break;
  }
  if (!best) {
    last_iterate.n_iterations = total_iterations;
    last_iterate.warnings = guess.warnings;
    throw FitDivergedError("fit diverged: no convergence within " + std::to_string(options.max_iterations) +
                               " iterations",
                           std::move(last_iterate));
  }

  const Problem& pr = *best_problem;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  evaluate(pr, best->theta, r, &jac);
  const Mat7 a = jac.transpose() * jac;
  const Vec7 scale = a.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Mat7 scaled = scale.asDiagonal() * a * scale.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Mat7> eig(scaled);
  const double rcond = eig.eigenvalues().minCoeff() / eig.eigenvalues().maxCoeff();

  ResonanceFit fit = unpack(pr, best->theta);
  fit.n_iterations = total_iterations;
  fit.warnings = guess.warnings;
  if (!(rcond > options.unidentifiable_rcond)) {
    throw UnidentifiableError("unidentifiable parameters: normal matrix reciprocal condition " +
                              std::to_string(rcond));
  }
  if (rcond < options.degenerate_rcond) {
    fit.degenerate = true;
    fit.warnings.push_back("near-degenerate parameters: normal matrix reciprocal condition " +
                           std::to_string(rcond));
  }

  const double dof = static_cast<double>(r.size() - kParams);
  const double sigma2 = r.squaredNorm() / dof;
  const Mat7 cov_internal =
      sigma2 * (scale.asDiagonal() * eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                eig.eigenvectors().transpose() * scale.asDiagonal());
  Eigen::Vector4d jac_core(pr.f_ref / pr.ql_ref, fit.qi, fit.qc_star, 1.0);
  fit.param_covariance = jac_core.asDiagonal() * cov_internal.topLeftCorner<4, 4>() * jac_core.asDiagonal();
  fit.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(window.size()));
  fit.validate();
  return fit;
}

}  // namespace tlsloss::resonance
