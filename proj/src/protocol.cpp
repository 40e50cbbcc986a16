// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/protocol.hpp"

#include <algorithm>
#include <stdexcept>

namespace qkdlink {

namespace {

constexpr uint64_t kFrameValueTag = stream_tag("frame-value");
constexpr uint64_t kFrameBasisTag = stream_tag("frame-basis");

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(std::span<const uint8_t> in, size_t pos) {
  return uint16_t(in[pos]) | uint16_t(in[pos + 1]) << 8;
}

uint32_t get_u32(std::span<const uint8_t> in, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(in[pos + i]) << (8 * i);
  return v;
}

}  // namespace

Frame generate_frame(uint64_t seed, ProtocolKind protocol, uint32_t frame_number) {
  Frame f;
  f.frame_number = frame_number;
  RandomStream value(derive_seed(seed, kFrameValueTag, frame_number));
  f.value_bits = BitVector::random(kFrameBits, value);
  if (protocol == ProtocolKind::BB84) {
    RandomStream basis(derive_seed(seed, kFrameBasisTag, frame_number));
    f.basis_bits = BitVector::random(kFrameBits, basis);
  } else {
    f.basis_bits = BitVector(kFrameBits);
  }
  return f;
}

PolarizationState transmit_state(ProtocolKind protocol, bool value_bit, bool basis_bit) {
  if (protocol == ProtocolKind::B92)
    return value_bit ? PolarizationState::P45 : PolarizationState::V;
  if (!basis_bit) return value_bit ? PolarizationState::H : PolarizationState::V;
  return value_bit ? PolarizationState::P45 : PolarizationState::M45;
}

namespace {

void check_report(const Frame& frame, const DetectionReport& r) {
  if (r.frame_number != frame.frame_number)
    throw std::invalid_argument("sift: report for unknown frame number");
  if (r.bit_position >= kFrameBits)
    throw std::out_of_range("sift: bit position out of range");
}

}  // namespace

std::vector<SiftedBit> sift_b92(const Frame& frame, const std::vector<DetectionReport>& reports) {
  std::vector<SiftedBit> out;
  out.reserve(reports.size());
  for (const auto& r : reports) {
    check_report(frame, r);
    out.push_back({uint8_t(frame.value_bits.get(r.bit_position)), conclusive_bit(r.detector_id),
                   r.bit_position});
  }
  return out;
}

std::vector<SiftedBit> sift_bb84(const Frame& frame, const std::vector<DetectionReport>& reports) {
  std::vector<SiftedBit> out;
  for (const auto& r : reports) {
    check_report(frame, r);
    if (bool(r.basis_bit) != frame.basis_bits.get(r.bit_position)) continue;
    out.push_back({uint8_t(frame.value_bits.get(r.bit_position)), conclusive_bit(r.detector_id),
                   r.bit_position});
  }
  return out;
}

std::vector<uint32_t> reconcile_frames(std::vector<uint32_t> alice_done,
                                       std::vector<uint32_t> bob_done) {
  std::sort(alice_done.begin(), alice_done.end());
  std::sort(bob_done.begin(), bob_done.end());
  std::vector<uint32_t> retained;
  std::set_intersection(alice_done.begin(), alice_done.end(), bob_done.begin(), bob_done.end(),
                        std::back_inserter(retained));
  return retained;
}

bool CapacityQueue::offer(const OfferedFrame& frame) {
  if (!model_.enabled || model_.service_rate_hz <= 0.0) return true;
  while (!finish_times_.empty() && finish_times_.front() <= frame.time_s) finish_times_.pop_front();
  if (int(finish_times_.size()) > model_.queue_depth) return false;
  const double start = std::max(frame.time_s, server_free_at_);
  server_free_at_ = start + frame.work / model_.service_rate_hz;
  finish_times_.push_back(server_free_at_);
  return true;
}

CapacityOutcome apply_capacity(const std::vector<OfferedFrame>& offered,
                               const CapacityModel& model) {
  CapacityQueue queue(model);
  CapacityOutcome out;
  for (const auto& f : offered)
    (queue.offer(f) ? out.processed : out.dropped).push_back(f.frame_number);
  return out;
}

QberReport compute_qber(const BitVector& alice_bits, const BitVector& bob_bits,
                        std::span<const DetectionCause> bob_causes) {
  if (alice_bits.size() != bob_bits.size())
    throw std::length_error("compute_qber: sifted buffers differ in length");
  QberReport rep;
  rep.length = alice_bits.size();
  if (rep.length == 0) return rep;
  rep.errors = alice_bits.hamming_distance(bob_bits);
  rep.qber = double(rep.errors) / double(rep.length);
  if (!bob_causes.empty()) {
    if (bob_causes.size() != bob_bits.size())
      throw std::length_error("compute_qber: cause tags differ in length");
    size_t per_cause[kCauseCount] = {0, 0, 0, 0};
    for (size_t i = 0; i < rep.length; ++i)
      if (alice_bits.get(i) != bob_bits.get(i)) ++per_cause[size_t(bob_causes[i])];
    for (int c = 0; c < kCauseCount; ++c)
      rep.by_cause[c] = double(per_cause[c]) / double(rep.length);
  }
  return rep;
}

std::vector<uint8_t> encode_message(const Message& msg) {
  std::vector<uint8_t> payload;
  if (const auto* sync = std::get_if<SyncMsg>(&msg)) {
    payload.push_back(0x01);
    put_u32(payload, sync->frame_number);
  } else if (const auto* report = std::get_if<ReportMsg>(&msg)) {
    payload.push_back(0x02);
    put_u32(payload, report->report.frame_number);
    put_u16(payload, report->report.bit_position);
    payload.push_back(uint8_t((report->report.basis_bit & 1) | ((report->report.detector_id & 1) << 1)));
  } else {
    const auto& done = std::get<FrameDoneMsg>(msg);
    if (done.frames.size() > kMaxFrameDoneCount)
      throw ProtocolError("FRAME_DONE exceeds maximum message length");
    payload.push_back(0x03);
    put_u16(payload, uint16_t(done.frames.size()));
    for (uint32_t f : done.frames) put_u32(payload, f);
  }
  if (payload.size() > kMaxPayloadBytes) throw ProtocolError("message exceeds maximum length");
  std::vector<uint8_t> out;
  out.reserve(payload.size() + 2);
  put_u16(out, uint16_t(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Message decode_payload(std::span<const uint8_t> payload) {
  if (payload.empty()) throw ProtocolError("empty message payload");
  switch (payload[0]) {
    case 0x01: {
      if (payload.size() != 5) throw ProtocolError("SYNC: bad payload length");
      return SyncMsg{get_u32(payload, 1)};
    }
    case 0x02: {
      if (payload.size() != 8) throw ProtocolError("REPORT: bad payload length");
      DetectionReport r;
      r.frame_number = get_u32(payload, 1);
      r.bit_position = get_u16(payload, 5);
      r.basis_bit = payload[7] & 1;
      r.detector_id = (payload[7] >> 1) & 1;
      return ReportMsg{r};
    }
    case 0x03: {
      if (payload.size() < 3) throw ProtocolError("FRAME_DONE: bad payload length");
      const uint16_t count = get_u16(payload, 1);
      if (payload.size() != size_t(3) + size_t(count) * 4)
        throw ProtocolError("FRAME_DONE: count disagrees with payload length");
      FrameDoneMsg done;
      done.frames.reserve(count);
      for (uint16_t i = 0; i < count; ++i) done.frames.push_back(get_u32(payload, 3 + 4 * i));
      return done;
    }
    default:
      throw ProtocolError("unknown message type");
  }
}

}  // namespace qkdlink
