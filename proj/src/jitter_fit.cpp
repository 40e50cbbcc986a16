// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/jitter_fit.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

namespace qkdlink {

namespace {

constexpr double kSqrt2Pi = 2.506628274631000502;

double normal_pdf(double x, double sigma) {
  const double z = x / sigma;
  return std::exp(-0.5 * z * z) / (sigma * kSqrt2Pi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730951); }

// Exponentially modified Gaussian: Gaussian core convolved with a one-sided
// exponential of mean tau.
double exgauss_pdf(double x, double sigma, double tau) {
  const double a = sigma * sigma / (2.0 * tau * tau) - x / tau;
  const double z = x / sigma - sigma / tau;
  if (a > 600.0) return 0.0;  // cdf factor underflows first in this regime
  return std::exp(a) * normal_cdf(z) / tau;
}

struct Bisection {
  double value = 0.0;
  bool bracketed = false;
};

// Bisection for f(x) = 0 on [lo, hi]. If the bracket does not straddle zero
// the closer endpoint is returned with bracketed = false.
Bisection bisect(double lo, double hi, const std::function<double(double)>& f) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return {lo, true};
  if (fhi == 0.0) return {hi, true};
  if ((flo < 0.0) == (fhi < 0.0))
    return {std::abs(flo) < std::abs(fhi) ? lo : hi, false};
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return {mid, true};
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo + hi), true};
}

}  // namespace

double jitter_density(const JitterModel& model, double t_ps) {
  const double x = t_ps - model.offset_ps;
  double f = 0.0;
  if (model.core_sigma_ps > 0.0)
    f += (1.0 - model.tail_fraction) * normal_pdf(x, model.core_sigma_ps);
  if (model.tail_fraction > 0.0)
    f += model.tail_fraction * exgauss_pdf(x, model.core_sigma_ps, model.tail_decay_ps);
  return f;
}

double jitter_density_integral(const JitterModel& model, double a_ps, double b_ps) {
  if (!(b_ps > a_ps)) return 0.0;
  // Composite Simpson, ~2 ps panels; plenty for densities this smooth.
  int n = int((b_ps - a_ps) / 2.0) + 1;
  n = std::max(n, 32);
  if (n % 2) ++n;
  const double h = (b_ps - a_ps) / n;
  double sum = jitter_density(model, a_ps) + jitter_density(model, b_ps);
  for (int i = 1; i < n; ++i)
    sum += jitter_density(model, a_ps + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

MaskStats jitter_mask_stats(const JitterModel& model, const ClockBase& clock) {
  const double gate = 2.0 * clock.bit_period_ps;
  const double period = clock.pulse_period_ps();
  MaskStats stats;

  if (model.core_sigma_ps == 0.0 && model.tail_fraction == 0.0) {
    // Delta response at the offset.
    const double t = model.offset_ps;
    if (t >= 0.0 && t < gate) stats.acceptance = 1.0;
    for (int k = 1; k * period <= t; ++k)
      if (t >= k * period && t < k * period + gate) stats.leakage = 1.0;
    return stats;
  }

  stats.acceptance = jitter_density_integral(model, 0.0, gate);
  for (int k = 1; k * period < kMaxJitterDelayPs; ++k) {
    const double term = jitter_density_integral(model, k * period, k * period + gate);
    stats.leakage += term;
    if (k * period > model.offset_ps + 6.0 * model.core_sigma_ps && term < 1e-13) break;
  }
  return stats;
}

double jitter_density_fwhm(const JitterModel& model) {
  if (model.core_sigma_ps == 0.0 && model.tail_fraction == 0.0) return 0.0;
  const double sigma = std::max(model.core_sigma_ps, 1.0);
  const double tail = model.tail_fraction > 0.0 ? model.tail_decay_ps : 0.0;

  // Coarse peak scan, then refine.
  double lo = model.offset_ps - 6.0 * sigma;
  double hi = model.offset_ps + 6.0 * sigma + 3.0 * tail;
  double peak_x = model.offset_ps, peak_f = -1.0;
  for (double x = lo; x <= hi; x += sigma / 64.0) {
    const double f = jitter_density(model, x);
    if (f > peak_f) {
      peak_f = f;
      peak_x = x;
    }
  }
  for (double x = peak_x - sigma / 32.0; x <= peak_x + sigma / 32.0; x += sigma / 4096.0) {
    const double f = jitter_density(model, x);
    if (f > peak_f) {
      peak_f = f;
      peak_x = x;
    }
  }
  const double half = peak_f / 2.0;

  // March outward until below half, then bisect the crossing.
  const auto crossing = [&](double step) {
    double x = peak_x;
    while (jitter_density(model, x) > half) x += step;
    auto r = bisect(x - step, x, [&](double t) { return jitter_density(model, t) - half; });
    return r.value;
  };
  const double right = crossing(1.0);
  const double left = crossing(-1.0);
  return right - left;
}

JitterModel fit_jitter_model(const JitterTargets& targets, const ClockBase& clock) {
  if (!(targets.acceptance > 0.0 && targets.acceptance <= 1.0))
    throw std::invalid_argument("fit_jitter_model: acceptance target must be in (0,1]");
  if (!(targets.leakage >= 0.0 && targets.leakage < 1.0))
    throw std::invalid_argument("fit_jitter_model: leakage target must be in [0,1)");

  JitterModel m;
  m.offset_ps = clock.bit_period_ps;  // response peak at the center of the two-bin gate

  // A perfect mask wants no spread at all.
  if (targets.acceptance >= 1.0 - 1e-12 && targets.leakage <= 1e-12 && targets.fwhm_ps <= 0.0) {
    m.core_sigma_ps = 0.0;
    m.tail_fraction = 0.0;
    m.tail_decay_ps = 0.0;
    return m;
  }

  m.core_sigma_ps = targets.fwhm_ps > 0.0 ? targets.fwhm_ps / 2.3548200450309493 : m.core_sigma_ps;
  m.tail_fraction = 0.2;
  m.tail_decay_ps = 600.0;

  const double tf_hi = 0.95;
  const double tau_lo = 10.0, tau_hi = 2200.0;  // leakage is monotone in tau on this branch
  const double sigma_lo = 20.0, sigma_hi = 520.0;

  bool bracketed = true;
  for (int iter = 0; iter < 40; ++iter) {
    auto acc_err = [&](double tf) {
      JitterModel t = m;
      t.tail_fraction = tf;
      return jitter_mask_stats(t, clock).acceptance - targets.acceptance;
    };
    auto r_tf = bisect(0.0, tf_hi, acc_err);
    m.tail_fraction = r_tf.value;

    auto leak_err = [&](double tau) {
      JitterModel t = m;
      t.tail_decay_ps = tau;
      return jitter_mask_stats(t, clock).leakage - targets.leakage;
    };
    auto r_tau = bisect(tau_lo, tau_hi, leak_err);
    m.tail_decay_ps = r_tau.value;

    Bisection r_sigma{m.core_sigma_ps, true};
    if (targets.fwhm_ps > 0.0) {
      auto fwhm_err = [&](double sigma) {
        JitterModel t = m;
        t.core_sigma_ps = sigma;
        return jitter_density_fwhm(t) - targets.fwhm_ps;
      };
      r_sigma = bisect(sigma_lo, sigma_hi, fwhm_err);
      m.core_sigma_ps = r_sigma.value;
    }
    bracketed = r_tf.bracketed && r_tau.bracketed && r_sigma.bracketed;

    const auto stats = jitter_mask_stats(m, clock);
    const bool fwhm_ok =
        targets.fwhm_ps <= 0.0 || std::abs(jitter_density_fwhm(m) - targets.fwhm_ps) < 0.05;
    if (bracketed && std::abs(stats.acceptance - targets.acceptance) < 1e-7 &&
        std::abs(stats.leakage - targets.leakage) < 1e-8 && fwhm_ok)
      return m;
  }

  const auto stats = jitter_mask_stats(m, clock);
  char msg[256];
  std::snprintf(msg, sizeof(msg),
                "fit_jitter_model: targets unreachable; achievable frontier near "
                "acceptance=%.6f leakage=%.6f fwhm=%.1f ps "
                "(tail_fraction in [0,%.2f], tail_decay_ps in [%.0f,%.0f])",
                stats.acceptance, stats.leakage, jitter_density_fwhm(m), tf_hi, tau_lo, tau_hi);
  throw std::runtime_error(msg);
}

JitterModel JitterModel::calibrated_default() {
  // fit_jitter_model({0.93, 0.005, 550}, ClockBase{}); frozen so every run
  // starts from the same constants. The calibration test re-derives them.
  JitterModel m;
  m.core_sigma_ps = 221.207254;
  m.tail_fraction = 0.235864;
  m.tail_decay_ps = 624.648082;
  m.offset_ps = 800.0;
  return m;
}

}  // namespace qkdlink
