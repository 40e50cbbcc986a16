// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "qkdlink/detector.hpp"

namespace qkdlink {

/// Probability density of the composite jitter response at delay t (ps).
double jitter_density(const JitterModel& model, double t_ps);

/// Numerical integral of the density over [a, b] (composite Simpson).
double jitter_density_integral(const JitterModel& model, double a_ps, double b_ps);

/// Mask statistics of the response against the periodic two-bin gate.
/// acceptance: mass in the pulse's own gate [0, gate_ps).
/// leakage: mass in any later pulse's gate, i.e. [k*period, k*period+gate).
struct MaskStats {
  double acceptance = 0.0;
  double leakage = 0.0;
};
MaskStats jitter_mask_stats(const JitterModel& model, const ClockBase& clock);

/// FWHM of the composite density itself (not a histogram estimate).
double jitter_density_fwhm(const JitterModel& model);

/// Calibration targets for fit_jitter_model. fwhm_ps = 0 skips the width
/// constraint (then core_sigma_ps keeps its default value).
struct JitterTargets {
  double acceptance = 0.93;
  double leakage = 0.005;
  double fwhm_ps = 550.0;
};

/// Fits tail_fraction (acceptance target), tail_decay_ps (leakage target)
/// and, when fwhm_ps > 0, core_sigma_ps (width target) by alternating 1-D
/// bisections against quadrature of the composite density. The response peak
/// is pinned at the center of the two-bin gate (offset = bit period).
/// Throws std::runtime_error naming the achievable range when a target lies
/// outside what the bracket can reach.
JitterModel fit_jitter_model(const JitterTargets& targets, const ClockBase& clock);

}  // namespace qkdlink
