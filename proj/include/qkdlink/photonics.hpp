// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "qkdlink/random.hpp"

namespace qkdlink {

/// Number of bit positions in one protocol frame; shared by the gating
/// arithmetic and the frame-transfer protocol.
inline constexpr int kFrameBits = 2048;

enum class ProtocolKind : uint8_t { B92, BB84 };

/// The four linear polarizations used on the quantum channel.
/// Fixed angle map: V=90, P45=45, H=0, M45=135 degrees.
enum class PolarizationState : uint8_t { V, P45, H, M45 };

int polarization_angle_deg(PolarizationState s);

/// |<a|b>|^2 = cos^2(theta_a - theta_b); exact rational values for the four
/// states (1, 1/2 or 0).
double overlap_probability(PolarizationState a, PolarizationState b);

/// Channel and detector loss/noise parameters.
struct LinkBudget {
  double mu = 0.1;                      // mean photon number per pulse
  double path_loss_db = 5.0;            // transmit telescope -> receiver fiber
  double filter_transmissivity = 0.48;  // spectral filter + focusing lens
  double quantum_efficiency = 0.5;
  double extinction_ratio = 500.0;      // blocked polarization leaks with p = 1/(ratio+1)
  double background_rate_hz = 1.0e3;    // per-detector Poisson count rate
  double splitter_imbalance = 0.5;      // P(photon takes the H-analyzer arm)
  double quantum_wavelength_nm = 845.0;
  double classical_wavelength_nm = 1550.0;

  double survival_probability() const;  // 10^(-path_loss_db/10) * filter_transmissivity
  double leak_probability() const;      // 1/(extinction_ratio + 1)
  void validate() const;                // throws std::invalid_argument
};

inline constexpr double kDaylightBackgroundHz = 2.0e6;
inline constexpr double kNightBackgroundHz = 1.0e3;

/// Timing base of the link: 1.25 Gbps serial bins, pulses every
/// pulse_spacing_bits bins.
struct ClockBase {
  double bit_period_ps = 800.0;
  int pulse_spacing_bits = 4;
  double pulse_width_ps = 250.0;
  int board_word_bits = 10;
  double board_clock_hz = 1.25e8;
  double phase_offset_ps = 0.0;  // Alice's pulse comb relative to Bob's bin grid

  double serial_rate_hz() const { return board_clock_hz * board_word_bits; }
  double pulse_rate_hz() const { return serial_rate_hz() / pulse_spacing_bits; }
  double pulse_period_ps() const { return bit_period_ps * pulse_spacing_bits; }
  void validate() const;
};

/// One pulse slot's worth of photons, all in the same polarization state.
struct PhotonBatch {
  int64_t slot_index = 0;
  int count = 0;
  PolarizationState state = PolarizationState::V;
  double emit_time_ps = 0.0;
};

PhotonBatch make_batch(int64_t slot_index, int count, PolarizationState state,
                       const ClockBase& clock);

/// Photon number of one attenuated pulse: Poisson with mean mu.
int sample_photon_number(double mu, RandomStream& rng);

/// Binomial thinning of a batch through the path loss and spectral filter.
PhotonBatch survive_channel(const PhotonBatch& batch, const LinkBudget& budget, RandomStream& rng);

enum class AnalyzerOutcome : uint8_t {
  ConclusiveDetector0,  // -45 degree analyzer arm
  ConclusiveDetector1,  // H analyzer arm
  Absorbed,
};

struct RoutingResult {
  AnalyzerOutcome outcome = AnalyzerOutcome::Absorbed;
  bool leaked = false;  // transmitted through a nominally blocked analyzer
};

/// One photon through Bob's optics: 50/50 (or imbalanced) arm choice, then
/// transmission through that arm's analyzer with probability cos^2(delta),
/// except that a fully blocked state leaks with probability 1/(ratio+1).
/// Photons not transmitted are absorbed; there is no reflected-port detector.
RoutingResult route_polarization(PolarizationState state, const LinkBudget& budget,
                                 RandomStream& rng);

/// Homogeneous Poisson arrivals on one detector over [0, window_ps).
std::vector<double> sample_background(double rate_hz, double window_ps, RandomStream& rng);

/// Analytic sifted-rate estimate:
///   f_tx * mu * 10^(-loss/10) * filter * QE * f_conclusive
/// with f_conclusive = 1/4 for B92 and 1/2 for BB84. Mask acceptance and
/// processing capacity are applied downstream and are NOT included here; see
/// kPredictSiftRateScope. Throws on negative mu; mu = 0 returns 0.
double predict_sift_rate(const LinkBudget& budget, const ClockBase& clock, ProtocolKind protocol);

extern const char* const kPredictSiftRateScope;

}  // namespace qkdlink
