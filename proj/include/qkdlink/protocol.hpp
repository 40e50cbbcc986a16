// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qkdlink/bitvector.hpp"
#include "qkdlink/detector.hpp"
#include "qkdlink/photonics.hpp"

namespace qkdlink {

/// True if frame number a is ahead of b under 32-bit wraparound (half-window
/// comparison).
inline bool frame_newer(uint32_t a, uint32_t b) { return int32_t(a - b) > 0; }

/// Maps a wire frame number onto the absolute frame index nearest to
/// reference, so sessions longer than 2^32 frames keep working across the
/// wraparound.
inline int64_t resolve_frame_index(uint32_t wire, int64_t reference) {
  return reference + int64_t(int32_t(wire - uint32_t(reference)));
}

/// One 2048-bit block of Alice's random data. basis_bits stay zero for B92.
struct Frame {
  uint32_t frame_number = 0;
  BitVector value_bits;
  BitVector basis_bits;
};

/// Keyed deterministic frame generation: the same (seed, frame_number) pair
/// always yields the same bits, so both simulation endpoints can derive
/// Alice's transmitted data without shipping it.
Frame generate_frame(uint64_t seed, ProtocolKind protocol, uint32_t frame_number);

/// Alice's transmitted state for one bit of a frame.
PolarizationState transmit_state(ProtocolKind protocol, bool value_bit, bool basis_bit);

/// Bob's per-detection message back to Alice.
struct DetectionReport {
  uint32_t frame_number = 0;
  uint16_t bit_position = 0;
  uint8_t basis_bit = 0;  // meaningful in BB84; fixed 0 on the wire in B92
  uint8_t detector_id = 0;
};

/// Conclusive bit read from a detector click. In B92 the click excludes the
/// orthogonal transmitted state (detector 0 = -45 analyzer -> bit 0); in BB84
/// the analyzer measures the state directly. Both reduce to the detector id.
inline uint8_t conclusive_bit(uint8_t detector_id) { return detector_id; }

/// Bob's measurement basis implied by which analyzer fired (BB84):
/// detector 1 sits behind the H analyzer (rectilinear, basis 0), detector 0
/// behind the -45 analyzer (diagonal, basis 1).
inline uint8_t measured_basis(uint8_t detector_id) { return detector_id ? 0 : 1; }

struct SiftedBit {
  uint8_t alice_bit = 0;
  uint8_t bob_bit = 0;
  uint16_t bit_position = 0;
};

/// B92 sifting: every report yields a sifted bit (conclusiveness was decided
/// at detection). Throws on an unknown frame number or out-of-range position.
std::vector<SiftedBit> sift_b92(const Frame& frame, const std::vector<DetectionReport>& reports);

/// BB84 sifting: a report is kept iff its basis bit matches Alice's basis.
std::vector<SiftedBit> sift_bb84(const Frame& frame, const std::vector<DetectionReport>& reports);

/// Dual-sided frame retention: only frames both sides passed to memory
/// survive. Inputs need not be sorted; the result is sorted ascending.
std::vector<uint32_t> reconcile_frames(std::vector<uint32_t> alice_done,
                                       std::vector<uint32_t> bob_done);

/// Frame-processing capacity: single-server FIFO queue with deterministic
/// service (work / service_rate_hz seconds per item) and a finite buffer.
/// A frame arriving while more than queue_depth frames are in the system is
/// dropped. work = 1 for every frame reproduces a plain rate limit; the
/// harness scales work with the number of detection reports a frame carries.
struct CapacityModel {
  double service_rate_hz = 1.0e6;  // work units per second
  int queue_depth = 32;
  bool enabled = true;
};

struct OfferedFrame {
  double time_s = 0.0;
  double work = 1.0;
  uint32_t frame_number = 0;
};

class CapacityQueue {
 public:
  explicit CapacityQueue(const CapacityModel& model) : model_(model) {}

  /// True if the frame is accepted for processing, false if dropped.
  bool offer(const OfferedFrame& frame);

 private:
  CapacityModel model_;
  std::deque<double> finish_times_;  // service completion of frames in the system
  double server_free_at_ = 0.0;
};

struct CapacityOutcome {
  std::vector<uint32_t> processed;
  std::vector<uint32_t> dropped;
};

/// Batch form over time-ordered completions. Never reorders; processed and
/// dropped partition the input.
CapacityOutcome apply_capacity(const std::vector<OfferedFrame>& offered,
                               const CapacityModel& model);

/// Sifted-key error rate with a per-cause decomposition taken from the
/// receiver-side provenance tags (one per bob bit). Fractions are of the
/// whole buffer, so they sum to the QBER. Throws on length mismatch.
struct QberReport {
  double qber = 0.0;
  size_t errors = 0;
  size_t length = 0;
  double by_cause[kCauseCount] = {0, 0, 0, 0};
};

QberReport compute_qber(const BitVector& alice_bits, const BitVector& bob_bits,
                        std::span<const DetectionCause> bob_causes = {});

// --- wire format -----------------------------------------------------------
//
// Little-endian, length-prefixed messages: u16 payload length, then payload.
// SYNC:       type=0x01, frame_number u32
// REPORT:     type=0x02, frame_number u32, bit_position u16,
//             flags u8 (bit0 = basis_bit, bit1 = detector_id)
// FRAME_DONE: type=0x03, count u16, frame_number u32 x count

inline constexpr size_t kMaxPayloadBytes = 65535;
inline constexpr size_t kMaxFrameDoneCount = (kMaxPayloadBytes - 3) / 4;

struct SyncMsg {
  uint32_t frame_number = 0;
};
struct ReportMsg {
  DetectionReport report;
};
struct FrameDoneMsg {
  std::vector<uint32_t> frames;
};
using Message = std::variant<SyncMsg, ReportMsg, FrameDoneMsg>;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Length prefix + payload. Throws ProtocolError if the payload would exceed
/// the u16 length field.
std::vector<uint8_t> encode_message(const Message& msg);

/// Decodes one payload (without the length prefix). Throws ProtocolError on
/// unknown type or malformed length.
Message decode_payload(std::span<const uint8_t> payload);

}  // namespace qkdlink
