// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "qkdlink/harness.hpp"
#include "qkdlink/transport.hpp"

namespace qkdlink {

/// One protocol endpoint's view of a finished session. The Bob side fills
/// the detection/frame counters and per-bit cause tags; qber stays NaN here
/// because neither endpoint alone can compare the keys.
struct EndpointResult {
  SimMetrics metrics;
  BitVector key;
  std::vector<SiftTag> tags;               // (frame, position) per key bit
  std::vector<DetectionCause> causes;      // Bob side only
};

/// Alice: transmits the frame schedule (SYNC + FRAME_DONE), sifts against
/// incoming detection reports, retains only frames Bob also passed.
EndpointResult run_alice_session(const SimConfig& config, Endpoint& endpoint);

/// Bob: hosts the photon-transport kernel (source, channel, optics, APDs,
/// gating, coincidence logic), streams REPORT messages, models the
/// frame-processing capacity, and announces passed frames.
EndpointResult run_bob_session(const SimConfig& config, Endpoint& endpoint);

}  // namespace qkdlink
