// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include "qkdlink/detector.hpp"
#include "qkdlink/jitter_fit.hpp"
#include "qkdlink/photonics.hpp"
#include "qkdlink/protocol.hpp"

namespace qkdlink {

/// Full description of one simulated link session. The flat key=value config
/// file mirrors these fields one-to-one; see config_keys() for the list.
struct SimConfig {
  LinkBudget budget;
  ClockBase clock;
  JitterModel jitter = JitterModel::calibrated_default();
  CapacityModel capacity;
  ProtocolKind protocol = ProtocolKind::B92;
  double duration_s = 1.0;
  uint64_t seed = 1;
  bool daylight = false;            // selects the default background rate
  bool background_overridden = false;  // explicit background_rate_hz wins over daylight
  bool force_single_photon = false;    // exactly one photon per pulse (ideal-source rig)
  int frame_done_interval = 64;        // frames per FRAME_DONE announcement
  std::string entropy_file;            // optional external random source for frames

  /// Whole frames covered by duration_s (rounded down, at least one).
  int64_t frame_count() const;
  int64_t slot_count() const { return frame_count() * kFrameBits; }
  /// Simulated time actually covered by the whole-frame slot count.
  double simulated_seconds() const { return double(slot_count()) / clock.pulse_rate_hz(); }
  double effective_background_hz() const;

  void validate() const;
};

/// Parses the flat key=value config text; unknown keys are errors.
void parse_config_text(SimConfig& config, const std::string& text);
SimConfig load_config(const std::string& path);
std::string config_to_text(const SimConfig& config);

struct SimMetrics {
  uint64_t sifted_bits = 0;
  double sifted_rate_bps = 0.0;
  double qber = std::nan("");  // NaN when only one endpoint is visible
  double qber_by_cause[kCauseCount] = {0, 0, 0, 0};
  uint64_t frames_offered = 0;
  uint64_t frames_processed = 0;
  uint64_t frames_dropped = 0;
  double mask_acceptance = 0.0;  // accepted-in-own-gate fraction of pulse-origin detections
  uint64_t coincidence_discards = 0;
  uint64_t pulse_detections = 0;
  uint64_t background_detections = 0;
  uint64_t intersymbol_accepted = 0;
  uint64_t reports = 0;
  uint64_t report_anomalies = 0;
  double duration_s = 0.0;
  double predicted_sift_rate_bps = 0.0;  // predict_sift_rate(); see kPredictSiftRateScope
};

/// Per-bit provenance of a sifted buffer entry.
struct SiftTag {
  uint32_t frame_number = 0;
  uint16_t bit_position = 0;

  bool operator==(const SiftTag&) const = default;
};

struct SimResult {
  SimMetrics metrics;
  BitVector alice_key;
  BitVector bob_key;
  std::vector<DetectionCause> bob_causes;  // one per bob_key bit
  std::vector<SiftTag> source_tags;        // identical on both endpoints
};

/// Full in-process run: both protocol endpoints over an in-memory channel
/// plus the photon-transport kernel, deterministic for a fixed seed.
SimResult run(const SimConfig& config);

struct SweepRow {
  double mu = 0.0;
  double sifted_rate_bps = 0.0;
  double qber = 0.0;
  uint64_t frames_dropped = 0;
};

/// One run per mu value (positive, ascending) with seeds derived from the
/// master seed.
std::vector<SweepRow> sweep_mu(const SimConfig& config, const std::vector<double>& mu_values);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Folded APD arrival-time histograms at the full and the 1/4 transmission
/// rate, 12.2 ps bins; the bench experiment behind the jitter figures.
struct JitterExperiment {
  TimingHistogram full_rate;     // pulses every 4 bits (312.5 MHz), folded at 3.2 ns
  TimingHistogram quarter_rate;  // pulses every 16 bits (78.125 MHz), folded at 12.8 ns
};

JitterExperiment jitter_experiment(const SimConfig& config, uint64_t draws = 1000000);
void write_jitter_csv(std::ostream& os, const JitterExperiment& exp);

/// Human-readable metrics summary for the CLI.
std::string format_metrics(const SimMetrics& metrics);

}  // namespace qkdlink
