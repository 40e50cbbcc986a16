// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace qkdlink {

namespace {

/// Alice's random data, either keyed off the seed or read from an external
/// entropy file (frame f at byte offset f * bytes_per_frame).
class FrameSource {
 public:
  explicit FrameSource(const SimConfig& cfg)
      : seed_(cfg.seed), protocol_(cfg.protocol), path_(cfg.entropy_file) {
    if (!path_.empty()) {
      file_.open(path_, std::ios::binary);
      if (!file_) throw std::runtime_error("entropy_file: cannot open '" + path_ + "'");
    }
  }

  Frame get(uint32_t frame_number) {
    if (path_.empty()) return generate_frame(seed_, protocol_, frame_number);
    const size_t bytes = size_t(kFrameBits / 8) * (protocol_ == ProtocolKind::BB84 ? 2 : 1);
    std::vector<unsigned char> buf(bytes);
    file_.clear();
    file_.seekg(std::streamoff(bytes) * frame_number);
    file_.read(reinterpret_cast<char*>(buf.data()), std::streamsize(bytes));
    if (size_t(file_.gcount()) != bytes)
      throw std::runtime_error("entropy_file: out of data at frame " +
                               std::to_string(frame_number));
    Frame f;
    f.frame_number = frame_number;
    f.value_bits = BitVector(kFrameBits);
    f.basis_bits = BitVector(kFrameBits);
    for (int i = 0; i < kFrameBits; ++i) f.value_bits.set(i, (buf[i >> 3] >> (i & 7)) & 1);
    if (protocol_ == ProtocolKind::BB84)
      for (int i = 0; i < kFrameBits; ++i)
        f.basis_bits.set(i, (buf[kFrameBits / 8 + (i >> 3)] >> (i & 7)) & 1);
    return f;
  }

 private:
  uint64_t seed_;
  ProtocolKind protocol_;
  std::string path_;
  std::ifstream file_;
};

// ---------------------------------------------------------------------------

class AliceSession {
 public:
  AliceSession(const SimConfig& cfg, Endpoint& ep)
      : cfg_(cfg), ep_(ep), source_(cfg), n_frames_(cfg.frame_count()) {}

  EndpointResult run() {
    std::vector<uint32_t> block;
    block.reserve(size_t(cfg_.frame_done_interval));
    for (int64_t f = 0; f < n_frames_; ++f) {
      frame_entry(f);
      ep_.send(SyncMsg{uint32_t(f)});
      block.push_back(uint32_t(f));
      if (int(block.size()) == cfg_.frame_done_interval || f == n_frames_ - 1) {
        ep_.send(FrameDoneMsg{block});
        block.clear();
      }
      while (auto msg = ep_.poll()) handle(*msg);
    }
    ep_.close_write();
    while (auto msg = ep_.receive()) handle(*msg);
    // End of session: every frame Bob never announced was dropped on his side.
    while (next_resolve_ < n_frames_) resolve_front(bob_done_.count(next_resolve_) != 0);

    EndpointResult result;
    metrics_.sifted_bits = key_.size();
    metrics_.duration_s = cfg_.simulated_seconds();
    metrics_.sifted_rate_bps = double(key_.size()) / metrics_.duration_s;
    result.metrics = metrics_;
    result.key = key_;
    result.tags = std::move(tags_);
    return result;
  }

 private:
  struct PendingFrame {
    Frame frame;
    std::vector<DetectionReport> reports;
  };

  // The peer's kernel may run ahead of this transmit loop, so window entries
  // are created on demand; frame data is deterministic either way.
  PendingFrame& frame_entry(int64_t f) {
    while (f >= next_resolve_ + int64_t(window_.size())) {
      const auto fn = uint32_t(next_resolve_ + int64_t(window_.size()));
      window_.push_back({source_.get(fn), {}});
    }
    return window_[size_t(f - next_resolve_)];
  }

  void handle(const Message& msg) {
    if (const auto* report = std::get_if<ReportMsg>(&msg)) {
      on_report(report->report);
    } else if (const auto* done = std::get_if<FrameDoneMsg>(&msg)) {
      for (uint32_t f : done->frames) {
        const int64_t idx = resolve_frame_index(f, next_resolve_);
        bob_done_.insert(idx);
        bob_watermark_ = std::max(bob_watermark_, idx);
      }
      while (next_resolve_ <= bob_watermark_) resolve_front(bob_done_.count(next_resolve_) != 0);
    } else {
      throw ProtocolError("Alice received an unexpected SYNC");
    }
  }

  void on_report(const DetectionReport& r) {
    if (r.bit_position >= kFrameBits) throw ProtocolError("REPORT: bit position out of range");
    const int64_t f = resolve_frame_index(r.frame_number, next_resolve_);
    if (f < next_resolve_ || f >= n_frames_)
      throw ProtocolError("REPORT: unknown frame number");
    auto& pending = frame_entry(f);
    if (!pending.reports.empty() && pending.reports.back().bit_position >= r.bit_position) {
      ++metrics_.report_anomalies;  // duplicate position: keep the first
      return;
    }
    pending.reports.push_back(r);
    ++metrics_.reports;
  }

  void resolve_front(bool retained) {
    frame_entry(next_resolve_);
    PendingFrame pending = std::move(window_.front());
    window_.pop_front();
    bob_done_.erase(next_resolve_);
    const auto frame_number = uint32_t(next_resolve_);
    ++next_resolve_;
    if (!retained) return;
    const auto sifted = cfg_.protocol == ProtocolKind::B92
                            ? sift_b92(pending.frame, pending.reports)
                            : sift_bb84(pending.frame, pending.reports);
    for (const auto& s : sifted) {
      key_.push_back(s.alice_bit != 0);
      tags_.push_back({frame_number, s.bit_position});
    }
  }

  const SimConfig& cfg_;
  Endpoint& ep_;
  FrameSource source_;
  int64_t n_frames_;
  std::deque<PendingFrame> window_;  // frames [next_resolve_, transmitted)
  int64_t next_resolve_ = 0;
  std::set<int64_t> bob_done_;
  int64_t bob_watermark_ = -1;
  BitVector key_;
  std::vector<SiftTag> tags_;
  SimMetrics metrics_{};
};

// ---------------------------------------------------------------------------

class BobSession {
 public:
  BobSession(const SimConfig& cfg, Endpoint& ep)
      : cfg_(cfg),
        ep_(ep),
        source_(cfg),
        n_frames_(cfg.frame_count()),
        n_slots_(cfg.slot_count()),
        src_(derive_seed(cfg.seed, stream_tag("source"))),
        chan_(derive_seed(cfg.seed, stream_tag("channel"))),
        opt_(derive_seed(cfg.seed, stream_tag("optics"))),
        det_(derive_seed(cfg.seed, stream_tag("detector"))),
        bg_{RandomStream(derive_seed(cfg.seed, stream_tag("background"), 0)),
            RandomStream(derive_seed(cfg.seed, stream_tag("background"), 1))},
        queue_(cfg.capacity) {
    budget_ = cfg.budget;
    budget_.background_rate_hz = cfg.effective_background_hz();
    const double period = cfg_.clock.pulse_period_ps();
    const double reach = kMaxJitterDelayPs + std::abs(cfg_.clock.phase_offset_ps);
    const int64_t forward = int64_t(reach / period) + 4;
    horizon_ = forward + 4;
    ring_mask_ = 1;
    while (ring_mask_ < uint64_t(horizon_ + forward + 8)) ring_mask_ <<= 1;
    pending_.resize(size_t(ring_mask_));
    --ring_mask_;
  }

  EndpointResult run() {
    simulate();
    ep_.close_write();
    while (auto msg = ep_.receive()) handle(*msg);
    resolve_ready();
    if (resolve_base_ != n_frames_)
      throw ProtocolError("session ended before Alice announced all frames");

    EndpointResult result;
    metrics_.sifted_bits = key_.size();
    metrics_.duration_s = cfg_.simulated_seconds();
    metrics_.sifted_rate_bps = double(key_.size()) / metrics_.duration_s;
    if (metrics_.pulse_detections > 0)
      metrics_.mask_acceptance = double(accepted_own_) / double(metrics_.pulse_detections);
    result.metrics = metrics_;
    result.key = key_;
    result.tags = std::move(tags_);
    result.causes = std::move(causes_);
    return result;
  }

 private:
  struct PendingEvent {
    GateDecision dec;
    DetectionCause cause;
    int64_t origin_slot;
  };

  struct BobBit {
    uint16_t pos;
    uint8_t detector_id;
    DetectionCause cause;
  };

  struct FrameState {
    enum class Status : uint8_t { Pending, Passed, Dropped };
    std::vector<BobBit> bits;
    Status status = Status::Pending;
  };

  void simulate() {
    const double period = cfg_.clock.pulse_period_ps();
    const double exp_neg_mu = std::exp(-budget_.mu);
    const double bg_rate = budget_.background_rate_hz;
    const double bg_gap = bg_rate > 0.0 ? 1e12 / bg_rate : 0.0;
    double bg_next[2];
    for (int d = 0; d < 2; ++d)
      bg_next[d] = bg_rate > 0.0 ? bg_[d].exponential(bg_gap)
                                 : std::numeric_limits<double>::infinity();

    for (int64_t slot = 0; slot < n_slots_; ++slot) {
      const double slot_end = double(slot + 1) * period;
      for (int d = 0; d < 2; ++d) {
        while (bg_next[d] < slot_end) {
          add_event(DetectionEvent{bg_next[d], uint8_t(d), DetectionEvent::kNoSlot,
                                   DetectionCause::Background});
          bg_next[d] += bg_[d].exponential(bg_gap);
        }
      }
      if (slot >= horizon_) flush_group(slot - horizon_);
      if ((slot & (kFrameBits - 1)) == kFrameBits - 1)
        while (auto msg = ep_.poll()) handle(*msg);

      const int n = cfg_.force_single_photon ? 1 : src_.poisson_expneg(exp_neg_mu);
      if (n == 0) continue;

      const int64_t fidx = slot / kFrameBits;
      if (fidx != tx_frame_idx_) {
        tx_frame_ = source_.get(uint32_t(fidx));
        tx_frame_idx_ = fidx;
      }
      const int pos = int(slot & (kFrameBits - 1));
      const bool value = tx_frame_.value_bits.get(size_t(pos));
      const bool basis =
          cfg_.protocol == ProtocolKind::BB84 && tx_frame_.basis_bits.get(size_t(pos));
      const PolarizationState state = transmit_state(cfg_.protocol, value, basis);

      PhotonBatch batch = make_batch(slot, n, state, cfg_.clock);
      batch = survive_channel(batch, budget_, chan_);
      for (int i = 0; i < batch.count; ++i) {
        const RoutingResult routed = route_polarization(state, budget_, opt_);
        if (routed.outcome == AnalyzerOutcome::Absorbed) continue;
        const uint8_t det_id = routed.outcome == AnalyzerOutcome::ConclusiveDetector1 ? 1 : 0;
        const DetectionCause cause = routed.leaked ? DetectionCause::Leak : DetectionCause::Signal;
        const auto ev =
            detect(batch.emit_time_ps, det_id, slot, cause, budget_, cfg_.jitter, det_);
        if (ev && ev->time_ps >= 0.0) add_event(*ev);
      }
    }
    for (int64_t g = std::max<int64_t>(0, n_slots_ - horizon_); g < n_slots_; ++g) flush_group(g);
  }

  void add_event(const DetectionEvent& ev) {
    const GateDecision dec = gate(ev, cfg_.clock);
    if (dec.group_index >= n_slots_ || dec.group_index < next_flush_) return;  // outside the run
    pending_[size_t(dec.group_index) & ring_mask_].push_back({dec, ev.cause, ev.slot_index});
  }

  void flush_group(int64_t g) {
    auto& bucket = pending_[size_t(g) & ring_mask_];
    next_flush_ = g + 1;
    if (!bucket.empty()) {
      std::sort(bucket.begin(), bucket.end(), [](const PendingEvent& a, const PendingEvent& b) {
        if (a.dec.time_ps != b.dec.time_ps) return a.dec.time_ps < b.dec.time_ps;
        return a.dec.detector_id < b.dec.detector_id;
      });
      if (cfg_.jitter.dead_time_ps > 0.0) {
        auto kept = bucket.end();
        kept = std::remove_if(bucket.begin(), bucket.end(), [&](const PendingEvent& pe) {
          auto& last = last_fire_[pe.dec.detector_id];
          if (pe.dec.time_ps < last + cfg_.jitter.dead_time_ps) return true;
          last = pe.dec.time_ps;
          return false;
        });
        bucket.erase(kept, bucket.end());
      }

      scratch_.clear();
      bool det_acc[2] = {false, false};
      for (auto& pe : bucket) {
        const bool pulse_origin = pe.origin_slot != DetectionEvent::kNoSlot;
        if (pulse_origin)
          ++metrics_.pulse_detections;
        else
          ++metrics_.background_detections;
        if (!pe.dec.accepted) continue;
        if (pulse_origin) {
          if (pe.dec.group_index == pe.origin_slot) {
            ++accepted_own_;
          } else {
            pe.cause = DetectionCause::Intersymbol;
            ++metrics_.intersymbol_accepted;
          }
        }
        det_acc[pe.dec.detector_id] = true;
        scratch_.push_back(pe.dec);
      }
      if (det_acc[0] && det_acc[1]) {
        ++metrics_.coincidence_discards;
      } else if (!scratch_.empty()) {
        const auto survivors = coincidence_filter(scratch_);
        for (const auto& s : survivors) {
          for (const auto& pe : bucket) {
            if (pe.dec.time_ps == s.time_ps && pe.dec.detector_id == s.detector_id) {
              on_conclusive(pe);
              break;
            }
          }
        }
      }
      bucket.clear();
    }
    if (((g + 1) % kFrameBits) == 0) complete_frame(g / kFrameBits);
  }

  void on_conclusive(const PendingEvent& pe) {
    const int64_t f = pe.dec.group_index / kFrameBits;
    DetectionReport report;
    report.frame_number = uint32_t(f);
    report.bit_position = pe.dec.frame_bit_position;
    report.detector_id = pe.dec.detector_id;
    report.basis_bit =
        cfg_.protocol == ProtocolKind::BB84 ? measured_basis(pe.dec.detector_id) : 0;
    ep_.send(ReportMsg{report});
    ++metrics_.reports;
    frame_state(f).bits.push_back({pe.dec.frame_bit_position, pe.dec.detector_id, pe.cause});
  }

  FrameState& frame_state(int64_t f) {
    while (f >= resolve_base_ + int64_t(window_.size())) window_.emplace_back();
    return window_[size_t(f - resolve_base_)];
  }

  void complete_frame(int64_t f) {
    FrameState& st = frame_state(f);
    ++metrics_.frames_offered;
    bool passed = true;
    if (cfg_.capacity.enabled) {
      OfferedFrame offered;
      offered.time_s = double(f + 1) * kFrameBits * cfg_.clock.pulse_period_ps() * 1e-12;
      offered.work = double(std::max<size_t>(1, st.bits.size()));
      offered.frame_number = uint32_t(f);
      passed = queue_.offer(offered);
    }
    st.status = passed ? FrameState::Status::Passed : FrameState::Status::Dropped;
    if (passed) {
      ++metrics_.frames_processed;
      block_passed_.push_back(uint32_t(f));
    } else {
      ++metrics_.frames_dropped;
      st.bits.clear();
    }
    completed_ = f + 1;
    ++block_resolved_;
    if (block_resolved_ == cfg_.frame_done_interval || f == n_frames_ - 1) {
      ep_.send(FrameDoneMsg{block_passed_});
      block_passed_.clear();
      block_resolved_ = 0;
    }
    resolve_ready();
  }

  void resolve_ready() {
    while (resolve_base_ < completed_ && resolve_base_ <= alice_done_upto_) {
      FrameState st = std::move(window_.front());
      window_.pop_front();
      const int64_t f = resolve_base_++;
      if (st.status != FrameState::Status::Passed) continue;
      if (cfg_.protocol == ProtocolKind::BB84) {
        const Frame frame = source_.get(uint32_t(f));
        for (const auto& b : st.bits) {
          if (bool(measured_basis(b.detector_id)) != frame.basis_bits.get(b.pos)) continue;
          key_.push_back(conclusive_bit(b.detector_id) != 0);
          tags_.push_back({uint32_t(f), b.pos});
          causes_.push_back(b.cause);
        }
      } else {
        for (const auto& b : st.bits) {
          key_.push_back(conclusive_bit(b.detector_id) != 0);
          tags_.push_back({uint32_t(f), b.pos});
          causes_.push_back(b.cause);
        }
      }
    }
  }

  void handle(const Message& msg) {
    if (const auto* sync = std::get_if<SyncMsg>(&msg)) {
      if (sync->frame_number != uint32_t(syncs_seen_))
        throw ProtocolError("SYNC out of sequence");
      ++syncs_seen_;
    } else if (const auto* done = std::get_if<FrameDoneMsg>(&msg)) {
      for (uint32_t f : done->frames) {
        if (f != uint32_t(alice_done_upto_ + 1))
          throw ProtocolError("FRAME_DONE from Alice is not contiguous");
        ++alice_done_upto_;
      }
      resolve_ready();
    } else {
      throw ProtocolError("Bob received an unexpected REPORT");
    }
  }

  const SimConfig& cfg_;
  Endpoint& ep_;
  FrameSource source_;
  LinkBudget budget_;
  int64_t n_frames_;
  int64_t n_slots_;
  RandomStream src_, chan_, opt_, det_;
  RandomStream bg_[2];
  CapacityQueue queue_;

  int64_t horizon_ = 64;
  uint64_t ring_mask_ = 0;
  std::vector<std::vector<PendingEvent>> pending_;
  std::vector<GateDecision> scratch_;
  int64_t next_flush_ = 0;
  double last_fire_[2] = {-1e18, -1e18};

  Frame tx_frame_;
  int64_t tx_frame_idx_ = -1;

  std::deque<FrameState> window_;  // frames [resolve_base_, ...)
  int64_t resolve_base_ = 0;
  int64_t completed_ = 0;
  int64_t alice_done_upto_ = -1;
  int64_t syncs_seen_ = 0;
  std::vector<uint32_t> block_passed_;
  int block_resolved_ = 0;
  uint64_t accepted_own_ = 0;

  BitVector key_;
  std::vector<SiftTag> tags_;
  std::vector<DetectionCause> causes_;
  SimMetrics metrics_{};
};

}  // namespace

EndpointResult run_alice_session(const SimConfig& config, Endpoint& endpoint) {
  config.validate();
  AliceSession session(config, endpoint);
  return session.run();
}

EndpointResult run_bob_session(const SimConfig& config, Endpoint& endpoint) {
  config.validate();
  BobSession session(config, endpoint);
  return session.run();
}

}  // namespace qkdlink
