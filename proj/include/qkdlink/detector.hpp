// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "qkdlink/photonics.hpp"
#include "qkdlink/random.hpp"

namespace qkdlink {

/// Hard cap on a single jitter draw. Keeps the detection stream
/// finite-horizon for streaming group processing; the probability of a draw
/// this long is far below anything observable.
inline constexpr double kMaxJitterDelayPs = 131072.0;

/// APD response-time model: Gaussian core plus, with probability
/// tail_fraction, an added one-sided exponential tail. offset_ps is the mean
/// transit delay of the core relative to the pulse, i.e. where the response
/// peak sits inside the gate window.
struct JitterModel {
  double core_sigma_ps = 233.6;  // pure-core value for a 550 ps FWHM
  double tail_fraction = 0.0;
  double tail_decay_ps = 0.0;
  double offset_ps = 0.0;
  double dead_time_ps = 0.0;  // 0 disables the dead-time filter

  /// Constants fitted so that at 312.5 MHz the two-bin mask accepts 93 % of
  /// events, 0.5 % land in later gates, and the composite FWHM is 550 ps.
  /// See fit_jitter_model(); reproduced by the calibration test.
  static JitterModel calibrated_default();

  void validate() const;
};

enum class DetectionCause : uint8_t { Signal, Intersymbol, Background, Leak };
inline constexpr int kCauseCount = 4;
const char* to_string(DetectionCause c);

struct DetectionEvent {
  static constexpr int64_t kNoSlot = -1;

  double time_ps = 0.0;
  uint8_t detector_id = 0;
  int64_t slot_index = kNoSlot;  // originating pulse slot; kNoSlot for background
  DetectionCause cause = DetectionCause::Signal;
};

struct GateDecision {
  bool accepted = false;
  int64_t group_index = 0;
  uint16_t frame_bit_position = 0;  // group_index mod kFrameBits
  uint8_t bin_in_group = 0;
  uint8_t detector_id = 0;
  double time_ps = 0.0;

  bool operator==(const GateDecision&) const = default;
};

/// Jitter delay added to a photon's true arrival time.
double sample_jitter(const JitterModel& model, RandomStream& rng);

/// APD firing decision (probability = quantum efficiency) + jittered
/// timestamp. Cause comes from upstream provenance.
std::optional<DetectionEvent> detect(double true_time_ps, uint8_t detector_id, int64_t slot_index,
                                     DetectionCause cause, const LinkBudget& budget,
                                     const JitterModel& model, RandomStream& rng);

/// Time-bin decision: bin = floor(t/bit_period), groups of pulse_spacing_bits
/// bins, accepted iff the event falls in the first two bins of its group
/// (a gate of 2 x bit_period). Throws on negative time.
GateDecision gate(const DetectionEvent& event, const ClockBase& clock);

/// Per-gate coincidence handling: all accepted decisions of one group come
/// in; if both detectors fired the whole group is discarded, multiple counts
/// on one detector collapse to the earliest.
std::vector<GateDecision> coincidence_filter(const std::vector<GateDecision>& group);

/// Arrival-time histogram folded modulo the pulse period.
class TimingHistogram {
 public:
  TimingHistogram(double bin_width_ps, double modulo_ps);

  void add(double time_ps);

  double bin_width_ps() const { return bin_width_ps_; }
  double modulo_ps() const { return modulo_ps_; }
  uint64_t total() const { return total_; }
  const std::vector<uint64_t>& counts() const { return counts_; }

  /// FWHM by linear interpolation at the half-maximum crossings; nullopt for
  /// an empty histogram or when a crossing is missing.
  std::optional<double> fwhm_ps() const;

  /// CSV: bin_start_ps,count
  void write_csv(std::ostream& os) const;

 private:
  double bin_width_ps_;
  double modulo_ps_;
  std::vector<uint64_t> counts_;
  uint64_t total_ = 0;
};

TimingHistogram histogram(const std::vector<DetectionEvent>& events, double bin_width_ps,
                          double modulo_ps);

}  // namespace qkdlink
