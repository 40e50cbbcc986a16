// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace qkdlink {

const char* to_string(DetectionCause c) {
  switch (c) {
    case DetectionCause::Signal: return "signal";
    case DetectionCause::Intersymbol: return "intersymbol";
    case DetectionCause::Background: return "background";
    case DetectionCause::Leak: return "leak";
  }
  return "?";
}

void JitterModel::validate() const {
  if (!(core_sigma_ps >= 0.0)) throw std::invalid_argument("JitterModel: core_sigma_ps must be >= 0");
  if (!(tail_fraction >= 0.0 && tail_fraction < 1.0))
    throw std::invalid_argument("JitterModel: tail_fraction must be in [0,1)");
  if (tail_fraction > 0.0 && !(tail_decay_ps > 0.0))
    throw std::invalid_argument("JitterModel: tail_decay_ps must be > 0 when tail_fraction > 0");
  if (!(dead_time_ps >= 0.0)) throw std::invalid_argument("JitterModel: dead_time_ps must be >= 0");
}

double sample_jitter(const JitterModel& model, RandomStream& rng) {
  double d = model.offset_ps;
  if (model.core_sigma_ps > 0.0) d += model.core_sigma_ps * rng.gaussian();
  if (model.tail_fraction > 0.0 && rng.bernoulli(model.tail_fraction))
    d += rng.exponential(model.tail_decay_ps);
  return std::min(d, kMaxJitterDelayPs);
}

std::optional<DetectionEvent> detect(double true_time_ps, uint8_t detector_id, int64_t slot_index,
                                     DetectionCause cause, const LinkBudget& budget,
                                     const JitterModel& model, RandomStream& rng) {
  if (!rng.bernoulli(budget.quantum_efficiency)) return std::nullopt;
  DetectionEvent ev;
  ev.time_ps = true_time_ps + sample_jitter(model, rng);
  ev.detector_id = detector_id;
  ev.slot_index = slot_index;
  ev.cause = cause;
  return ev;
}

GateDecision gate(const DetectionEvent& event, const ClockBase& clock) {
  if (event.time_ps < 0.0) throw std::invalid_argument("gate: negative event time");
  const auto bin = int64_t(event.time_ps / clock.bit_period_ps);
  const int spacing = clock.pulse_spacing_bits;
  GateDecision d;
  d.group_index = bin / spacing;
  d.bin_in_group = uint8_t(bin % spacing);
  d.accepted = d.bin_in_group < 2;
  d.frame_bit_position = uint16_t(d.group_index % kFrameBits);
  d.detector_id = event.detector_id;
  d.time_ps = event.time_ps;
  return d;
}

std::vector<GateDecision> coincidence_filter(const std::vector<GateDecision>& group) {
  std::vector<GateDecision> accepted;
  for (const auto& d : group)
    if (d.accepted) accepted.push_back(d);
  if (accepted.empty()) return accepted;

  bool det0 = false, det1 = false;
  for (const auto& d : accepted) (d.detector_id ? det1 : det0) = true;
  if (det0 && det1) return {};

  const GateDecision* earliest = &accepted.front();
  for (const auto& d : accepted)
    if (d.time_ps < earliest->time_ps) earliest = &d;
  return {*earliest};
}

TimingHistogram::TimingHistogram(double bin_width_ps, double modulo_ps)
    : bin_width_ps_(bin_width_ps), modulo_ps_(modulo_ps) {
  if (!(bin_width_ps > 0.0) || !(modulo_ps > 0.0))
    throw std::invalid_argument("TimingHistogram: bin width and modulo must be > 0");
  counts_.assign(size_t(std::ceil(modulo_ps / bin_width_ps)), 0);
}

void TimingHistogram::add(double time_ps) {
  double folded = std::fmod(time_ps, modulo_ps_);
  if (folded < 0.0) folded += modulo_ps_;
  auto idx = size_t(folded / bin_width_ps_);
  if (idx >= counts_.size()) idx = counts_.size() - 1;
  ++counts_[idx];
  ++total_;
}

std::optional<double> TimingHistogram::fwhm_ps() const {
  if (total_ == 0) return std::nullopt;
  size_t peak = 0;
  for (size_t i = 1; i < counts_.size(); ++i)
    if (counts_[i] > counts_[peak]) peak = i;
  const double half = double(counts_[peak]) / 2.0;
  const auto center = [&](size_t i) { return (double(i) + 0.5) * bin_width_ps_; };

  // Walk outward to the first bins at or below half maximum and interpolate.
  std::optional<double> left, right;
  for (size_t i = peak; i-- > 0;) {
    if (double(counts_[i]) <= half) {
      const double y0 = double(counts_[i]), y1 = double(counts_[i + 1]);
      left = center(i) + (half - y0) / (y1 - y0) * bin_width_ps_;
      break;
    }
  }
  for (size_t i = peak + 1; i < counts_.size(); ++i) {
    if (double(counts_[i]) <= half) {
      const double y0 = double(counts_[i - 1]), y1 = double(counts_[i]);
      right = center(i - 1) + (y0 - half) / (y0 - y1) * bin_width_ps_;
      break;
    }
  }
  if (!left || !right) return std::nullopt;
  return *right - *left;
}

void TimingHistogram::write_csv(std::ostream& os) const {
  os << "bin_start_ps,count\n";
  char buf[64];
  for (size_t i = 0; i < counts_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.1f,%llu\n", double(i) * bin_width_ps_,
                  static_cast<unsigned long long>(counts_[i]));
    os << buf;
  }
}

TimingHistogram histogram(const std::vector<DetectionEvent>& events, double bin_width_ps,
                          double modulo_ps) {
  TimingHistogram h(bin_width_ps, modulo_ps);
  for (const auto& ev : events) h.add(ev.time_ps);
  return h;
}

}  // namespace qkdlink
