// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/photonics.hpp"

#include <cmath>
#include <stdexcept>

namespace qkdlink {

const char* const kPredictSiftRateScope =
    "excludes detector mask acceptance and frame-processing capacity";

int polarization_angle_deg(PolarizationState s) {
  switch (s) {
    case PolarizationState::V: return 90;
    case PolarizationState::P45: return 45;
    case PolarizationState::H: return 0;
    case PolarizationState::M45: return 135;
  }
  return 0;
}

double overlap_probability(PolarizationState a, PolarizationState b) {
  int delta = polarization_angle_deg(a) - polarization_angle_deg(b);
  delta = ((delta % 180) + 180) % 180;
  if (delta > 90) delta = 180 - delta;
  switch (delta) {
    case 0: return 1.0;
    case 45: return 0.5;
    case 90: return 0.0;
  }
  const double rad = delta * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad);
  return c * c;
}

double LinkBudget::survival_probability() const {
  return std::pow(10.0, -path_loss_db / 10.0) * filter_transmissivity;
}

double LinkBudget::leak_probability() const {
  if (std::isinf(extinction_ratio)) return 0.0;
  return 1.0 / (extinction_ratio + 1.0);
}

void LinkBudget::validate() const {
  if (!(mu >= 0.0)) throw std::invalid_argument("LinkBudget: mu must be >= 0");
  if (!(path_loss_db >= 0.0)) throw std::invalid_argument("LinkBudget: path_loss_db must be >= 0");
  if (!(filter_transmissivity >= 0.0 && filter_transmissivity <= 1.0))
    throw std::invalid_argument("LinkBudget: filter_transmissivity must be in [0,1]");
  if (!(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0))
    throw std::invalid_argument("LinkBudget: quantum_efficiency must be in [0,1]");
  if (!(extinction_ratio > 1.0))
    throw std::invalid_argument("LinkBudget: extinction_ratio must be > 1");
  if (!(background_rate_hz >= 0.0))
    throw std::invalid_argument("LinkBudget: background_rate_hz must be >= 0");
  if (!(splitter_imbalance >= 0.0 && splitter_imbalance <= 1.0))
    throw std::invalid_argument("LinkBudget: splitter_imbalance must be in [0,1]");
}

void ClockBase::validate() const {
  if (!(bit_period_ps > 0.0)) throw std::invalid_argument("ClockBase: bit_period_ps must be > 0");
  if (pulse_spacing_bits < 1) throw std::invalid_argument("ClockBase: pulse_spacing_bits must be >= 1");
  if (board_word_bits < 1 || !(board_clock_hz > 0.0))
    throw std::invalid_argument("ClockBase: bad board clock");
  // One serial bit per bin: bit_period * serial_rate == 1.
  const double product = bit_period_ps * 1e-12 * serial_rate_hz();
  if (std::abs(product - 1.0) > 1e-9)
    throw std::invalid_argument("ClockBase: bit_period_ps inconsistent with serial rate");
}

PhotonBatch make_batch(int64_t slot_index, int count, PolarizationState state,
                       const ClockBase& clock) {
  PhotonBatch b;
  b.slot_index = slot_index;
  b.count = count;
  b.state = state;
  b.emit_time_ps = double(slot_index) * clock.pulse_period_ps() + clock.phase_offset_ps;
  return b;
}

int sample_photon_number(double mu, RandomStream& rng) {
  if (mu <= 0.0) return 0;
  return rng.poisson(mu);
}

PhotonBatch survive_channel(const PhotonBatch& batch, const LinkBudget& budget,
                            RandomStream& rng) {
  PhotonBatch out = batch;
  const double p = budget.survival_probability();
  int survivors = 0;
  for (int i = 0; i < batch.count; ++i)
    if (rng.bernoulli(p)) ++survivors;
  out.count = survivors;
  return out;
}

RoutingResult route_polarization(PolarizationState state, const LinkBudget& budget,
                                 RandomStream& rng) {
  // NPBSC arm choice; the H analyzer feeds detector 1, the -45 analyzer
  // feeds detector 0.
  const bool arm_h = rng.bernoulli(budget.splitter_imbalance);
  const PolarizationState analyzer = arm_h ? PolarizationState::H : PolarizationState::M45;
  double p = overlap_probability(state, analyzer);
  bool leak_path = false;
  if (p == 0.0) {
    p = budget.leak_probability();
    leak_path = true;
  }
  if (!rng.bernoulli(p)) return {AnalyzerOutcome::Absorbed, false};
  return {arm_h ? AnalyzerOutcome::ConclusiveDetector1 : AnalyzerOutcome::ConclusiveDetector0,
          leak_path};
}

std::vector<double> sample_background(double rate_hz, double window_ps, RandomStream& rng) {
  std::vector<double> times;
  if (rate_hz <= 0.0 || window_ps <= 0.0) return times;
  const double mean_gap_ps = 1e12 / rate_hz;
  double t = rng.exponential(mean_gap_ps);
  while (t < window_ps) {
    times.push_back(t);
    t += rng.exponential(mean_gap_ps);
  }
  return times;
}

double predict_sift_rate(const LinkBudget& budget, const ClockBase& clock,
                         ProtocolKind protocol) {
  if (budget.mu < 0.0) throw std::invalid_argument("predict_sift_rate: mu must be >= 0");
  if (budget.mu == 0.0) return 0.0;
  const double f_conclusive = protocol == ProtocolKind::B92 ? 0.25 : 0.5;
  return clock.pulse_rate_hz() * budget.mu * budget.survival_probability() *
         budget.quantum_efficiency * f_conclusive;
}

}  // namespace qkdlink
