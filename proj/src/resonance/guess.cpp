#include "guess_detail.hpp"

#include "tlsloss/errors.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace tlsloss::resonance {
namespace detail {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Circle {
  Complex center;
  double radius = 0.0;
  double cost = 0.0;  // weighted mean squared radial misfit relative to radius^2
  bool ok = false;
};

// Weighted algebraic (Kasa) circle fit.
Circle fit_circle(std::span<const Complex> pts, std::span<const double> wt) {
  Circle c;
  const std::size_t n = pts.size();
  if (n < 3) return c;
  double wsum = 0.0;
  Complex mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    wsum += wt[k];
    mean += wt[k] * pts[k];
  }
  if (!(wsum > 0.0)) return c;
  mean /= wsum;
  double scale = 0.0;
  for (std::size_t k = 0; k < n; ++k) scale += wt[k] * std::norm(pts[k] - mean);
  scale = std::sqrt(scale / wsum);
  if (!(scale > 0.0)) return c;

  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Complex p = (pts[k] - mean) / scale;
    const double sw = std::sqrt(wt[k] / wsum);
    a(k, 0) = sw * p.real();
    a(k, 1) = sw * p.imag();
    a(k, 2) = sw;
    b(k) = -sw * std::norm(p);
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 3) return c;
  const Eigen::Vector3d x = qr.solve(b);
  const Complex center(-x(0) / 2.0, -x(1) / 2.0);
  const double r2 = std::norm(center) - x(2);
  if (!(r2 > 0.0)) return c;
  c.center = mean + scale * center;
  c.radius = scale * std::sqrt(r2);
  double misfit = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = std::abs(pts[k] - c.center) - c.radius;
    misfit += wt[k] * d * d;
  }
  c.cost = misfit / (wsum * c.radius * c.radius);
  c.ok = std::isfinite(c.cost);
  return c;
}

double wrap_angle(double a) { return std::remainder(a, kTwoPi); }

std::vector<double> unwrapped_phase(std::span<const Complex> s) {
  std::vector<double> ph(s.size());
  double offset = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double a = std::arg(s[k]);
    if (k > 0) {
      const double prev = ph[k - 1] - offset;
      const double jump = a - prev;
      offset -= kTwoPi * std::round(jump / kTwoPi);
    }
    ph[k] = a + offset;
  }
  return ph;
}

// Delay removed and mapped to the inverse domain, with weights ~ 1/var(1/S21).
struct InverseSamples {
  std::vector<Complex> w;
  std::vector<double> weight;
};

InverseSamples inverse_samples(std::span<const double> f, std::span<const Complex> s, double tau) {
  InverseSamples out;
  out.w.resize(f.size());
  out.weight.resize(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Complex z = s[k] * std::polar(1.0, kTwoPi * f[k] * tau);
    out.w[k] = 1.0 / z;
    out.weight[k] = std::norm(z) * std::norm(z);
  }
  return out;
}

double circle_cost_for_delay(std::span<const double> f, std::span<const Complex> s, double tau) {
  const auto inv = inverse_samples(f, s, tau);
  const Circle c = fit_circle(inv.w, inv.weight);
  return c.ok ? c.cost : std::numeric_limits<double>::infinity();
}

// Brent-polished local minima of the circle misfit over a delay grid, best first. The misfit
// is relative to the circle radius, which flatters large spurious circles, so the caller
// ranks the candidates by model residual instead.
std::vector<double> delay_candidates(std::span<const double> f, std::span<const Complex> s, double tau0) {
  constexpr int kGrid = 240;
  constexpr std::size_t kKeep = 4;
  const double span = f.back() - f.front();
  // Edge phase slopes put tau0 within a few percent of 1/span. Much wider windows reach
  // delays where the whole trace wraps into one circle about the origin.
  const double half = 0.25 / span;
  const double step = 2.0 * half / kGrid;
  std::vector<double> cost(kGrid + 1);
  for (int i = 0; i <= kGrid; ++i) cost[i] = circle_cost_for_delay(f, s, tau0 - half + step * i);

  std::vector<std::pair<double, int>> minima;
  for (int i = 0; i <= kGrid; ++i) {
    if (!std::isfinite(cost[i])) continue;
    const bool left_ok = i == 0 || cost[i] <= cost[i - 1];
    const bool right_ok = i == kGrid || cost[i] <= cost[i + 1];
    if (left_ok && right_ok) minima.emplace_back(cost[i], i);
  }
  std::sort(minima.begin(), minima.end());
  if (minima.size() > kKeep) minima.resize(kKeep);

  std::vector<double> out;
  for (const auto& [c, i] : minima) {
    const double t = tau0 - half + step * i;
    // Searched in grid-step units: the minimiser's tolerances assume an O(1) abscissa.
    const auto r = boost::math::tools::brent_find_minima(
        [&](double u) { return circle_cost_for_delay(f, s, t + u * step); }, -1.0, 1.0, 40);
    out.push_back(r.second <= c ? t + r.first * step : t);
  }
  if (out.empty()) out.push_back(tau0);
  return out;
}

std::optional<ResonanceFit> circle_guess(std::span<const double> f, std::span<const Complex> s, double tau,
                                         double f_ref, double ql_ref) {
  const auto inv = inverse_samples(f, s, tau);
  const Circle c = fit_circle(inv.w, inv.weight);
  if (!c.ok) return std::nullopt;

  // The far off-resonance point lies on the short arc between the two trace ends.
  const Complex u_first = (inv.w.front() - c.center) / std::abs(inv.w.front() - c.center);
  const Complex u_last = (inv.w.back() - c.center) / std::abs(inv.w.back() - c.center);
  const Complex bisector = u_first + u_last;
  if (std::abs(bisector) < 1e-6) return std::nullopt;
  const Complex off_resonance = c.center + c.radius * bisector / std::abs(bisector);
  const Complex env = 1.0 / off_resonance;

  const Complex coupling = 2.0 * (c.center * env - 1.0);  // (Qi/Qc*) e^{i phi}
  const double ratio = std::abs(coupling);
  if (!(ratio > 0.0)) return std::nullopt;

  // (inv - 1)/coupling = 1/(1 + i y) with y linear in frequency.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Complex q = (inv.w[k] * env - 1.0) / coupling;
    if (std::abs(q) < 1e-12) continue;
    const double y = (1.0 / q).imag();
    const double xi = (f[k] - f_ref) / f_ref * ql_ref;
    const double wt = inv.weight[k] * std::norm(q) * std::norm(q);
    sw += wt;
    sx += wt * xi;
    sy += wt * y;
    sxx += wt * xi * xi;
    sxy += wt * xi * y;
  }
  const double det = sw * sxx - sx * sx;
  if (!(sw > 0.0) || !(std::abs(det) > 0.0)) return std::nullopt;
  const double slope = (sw * sxy - sx * sy) / det * ql_ref;  // dy/dx with x = (f - f_ref)/f_ref
  const double intercept = (sy * sxx - sx * sxy) / det;
  const double qi = 0.5 * (slope - intercept);
  if (!(slope > 0.0) || !(qi > 0.0)) return std::nullopt;

  ResonanceFit g;
  g.f0 = f_ref * (slope - intercept) / slope;
  g.qi = qi;
  g.qc_star = qi / ratio;
  g.phi = std::arg(coupling);
  g.env_amplitude = std::abs(env);
  g.env_phase = std::arg(env);
  g.env_delay = tau;
  if (!(g.f0 > f.front()) || !(g.f0 < f.back()) || !std::isfinite(g.qc_star) ||
      !(std::abs(g.phi) < std::numbers::pi)) {
    return std::nullopt;
  }
  return g;
}

struct Dip {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t argmin = 0;
  double depth = 0.0;
};

}  // namespace

GuessReport analyze(const ComplexTrace& trace) {
  const std::size_t n = trace.size();
  if (n < 8) {
    throw PreconditionError("initial_guess: at least 8 samples are required");
  }
  const auto f = trace.frequencies();
  const auto s = trace.s21();
  const std::size_t edge = std::max<std::size_t>(3, n / 10);

  GuessReport report;

  // Noise from second differences of the off-resonance edges.
  double d2 = 0.0;
  std::size_t nd2 = 0;
  for (std::size_t k = 1; k + 1 < edge; ++k) {
    d2 += std::norm(s[k - 1] - 2.0 * s[k] + s[k + 1]);
    d2 += std::norm(s[n - k - 2] - 2.0 * s[n - k - 1] + s[n - k]);
    nd2 += 2;
  }
  report.noise_sigma = nd2 ? std::sqrt(d2 / (12.0 * static_cast<double>(nd2))) : 0.0;

  double baseline = 0.0;
  for (std::size_t k = 0; k < edge; ++k) baseline += std::abs(s[k]) + std::abs(s[n - 1 - k]);
  baseline /= 2.0 * static_cast<double>(edge);
  if (!(baseline > 0.0)) throw NoResonanceError("no resonance found: zero off-resonance transmission");

  std::vector<double> depth(n);
  for (std::size_t k = 0; k < n; ++k) depth[k] = 1.0 - std::abs(s[k]) / baseline;
  const std::size_t kmin = static_cast<std::size_t>(std::max_element(depth.begin(), depth.end()) - depth.begin());
  const double max_depth = depth[kmin];
  const double noise_depth = report.noise_sigma / baseline;
  if (!(max_depth > std::max(3.0 * noise_depth, 1e-9))) {
    std::ostringstream msg;
    msg << "no resonance found: deepest dip " << max_depth << " is within 3x the noise estimate "
        << noise_depth;
    throw NoResonanceError(msg.str());
  }

  // Group samples into dips; everything but the deepest one is reported and cut away.
  const double threshold = std::max(5.0 * noise_depth, 0.25 * max_depth);
  std::vector<Dip> dips;
  for (std::size_t k = 0; k < n; ++k) {
    if (depth[k] <= threshold) continue;
    if (!dips.empty() && k <= dips.back().last + 3) {
      Dip& d = dips.back();
      d.last = k;
      if (depth[k] > d.depth) {
        d.depth = depth[k];
        d.argmin = k;
      }
    } else {
      dips.push_back({k, k, k, depth[k]});
    }
  }
  report.window_begin = 0;
  report.window_end = n;
  for (const Dip& d : dips) {
    if (d.first <= kmin && kmin <= d.last) continue;
    std::ostringstream msg;
    msg << "additional resonance near " << f[d.argmin] << " Hz (depth " << d.depth
        << ") ignored; fitting the deepest dip";
    report.warnings.push_back(msg.str());
    if (d.last < kmin) {
      report.window_begin = std::max(report.window_begin, (d.last + kmin) / 2);
    } else {
      report.window_end = std::min(report.window_end, (d.first + kmin) / 2 + 1);
    }
  }
  if (report.window_end - report.window_begin < 8) {
    report.warnings.push_back("dip window too narrow to isolate; fitting the full trace");
    report.window_begin = 0;
    report.window_end = n;
  }

  const auto fw = f.subspan(report.window_begin, report.window_end - report.window_begin);
  const auto sw = s.subspan(report.window_begin, report.window_end - report.window_begin);
  const std::size_t nw = fw.size();
  const std::size_t kw = kmin - report.window_begin;
  report.bracketed = kw >= 2 && kw + 2 < nw;

  // Delay from the common phase slope of both trace ends.
  const std::size_t ew = std::max<std::size_t>(3, nw / 10);
  const auto phase = unwrapped_phase(sw);
  double sxx = 0.0, sxy = 0.0;
  for (const std::size_t start : {std::size_t{0}, nw - ew}) {
    double mf = 0.0, mp = 0.0;
    for (std::size_t k = start; k < start + ew; ++k) {
      mf += fw[k];
      mp += phase[k];
    }
    mf /= static_cast<double>(ew);
    mp /= static_cast<double>(ew);
    for (std::size_t k = start; k < start + ew; ++k) {
      sxx += (fw[k] - mf) * (fw[k] - mf);
      sxy += (fw[k] - mf) * (phase[k] - mp);
    }
  }
  const double tau0 = sxx > 0.0 ? -(sxy / sxx) / kTwoPi : 0.0;

  // Dip shape.
  ResonanceFit& h = report.heuristic;
  h.f0 = fw[kw];
  const double smin2 = std::norm(sw[kw]);
  const double base2 = baseline * baseline;
  const double level = base2 * (1.0 - 0.5 * (1.0 - smin2 / base2));
  auto crossing = [&](int dir) -> std::optional<double> {
    std::size_t k = kw;
    while (true) {
      if (dir < 0 && k == 0) return std::nullopt;
      if (dir > 0 && k + 1 >= nw) return std::nullopt;
      const std::size_t next = dir < 0 ? k - 1 : k + 1;
      const double a = std::norm(sw[k]);
      const double b = std::norm(sw[next]);
      if (b >= level) {
        const double t = b > a ? (level - a) / (b - a) : 0.0;
        return std::abs(fw[k] + t * (fw[next] - fw[k]) - fw[kw]);
      }
      k = next;
    }
  };
  const auto left = crossing(-1);
  const auto right = crossing(+1);
  double fwhm = 0.0;
  if (left && right) {
    fwhm = *left + *right;
  } else if (left || right) {
    fwhm = 2.0 * (left ? *left : *right);
  }
  if (!(fwhm > 0.0)) fwhm = (fw.back() - fw.front()) / 4.0;
  const double ql = h.f0 / fwhm;
  const double dip = std::clamp(max_depth, 1e-9, 0.999);
  const double ratio = dip / (1.0 - dip);
  h.qi = ql * (1.0 + ratio);
  h.qc_star = h.qi / ratio;
  h.phi = 0.0;
  h.env_amplitude = baseline;
  h.env_delay = tau0;
  Complex edge_sum = 0.0;
  for (std::size_t k = 0; k < ew; ++k) {
    for (const std::size_t j : {k, nw - 1 - k}) {
      const Complex z = sw[j] * std::polar(1.0, kTwoPi * fw[j] * tau0);
      edge_sum += z / std::abs(z);
    }
  }
  h.env_phase = std::arg(edge_sum);
  h.warnings = report.warnings;

  const ComplexTrace window = trace.slice(report.window_begin, report.window_end);
  h.residual_rms = residual_rms(h, window);

  for (const double tau : delay_candidates(fw, sw, tau0)) {
    auto refined = circle_guess(fw, sw, tau, h.f0, ql);
    if (!refined) continue;
    refined->env_phase = wrap_angle(refined->env_phase);
    refined->residual_rms = residual_rms(*refined, window);
    refined->warnings = report.warnings;
    const double to_beat = report.refined ? report.refined->residual_rms : h.residual_rms;
    if (refined->residual_rms <= to_beat) report.refined = std::move(*refined);
  }
  return report;
}

}  // namespace detail

ResonanceFit initial_guess(const ComplexTrace& trace) { return detail::analyze(trace).best(); }

}  // namespace tlsloss::resonance
