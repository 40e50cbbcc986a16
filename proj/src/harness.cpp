// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/harness.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "qkdlink/engine.hpp"
#include "qkdlink/transport.hpp"

namespace qkdlink {

SimResult run(const SimConfig& config) {
  config.validate();
  auto pair = make_memory_channel_pair();
  Endpoint alice_ep(Role::Alice, std::move(pair.alice_side));
  Endpoint bob_ep(Role::Bob, std::move(pair.bob_side));

  EndpointResult alice_result;
  std::exception_ptr alice_error;
  std::thread alice_thread([&] {
    try {
      alice_result = run_alice_session(config, alice_ep);
    } catch (...) {
      alice_error = std::current_exception();
      alice_ep.close_write();
    }
  });

  EndpointResult bob_result;
  try {
    bob_result = run_bob_session(config, bob_ep);
  } catch (...) {
    bob_ep.close_write();
    alice_thread.join();
    throw;
  }
  alice_thread.join();
  if (alice_error) std::rethrow_exception(alice_error);

  if (alice_result.key.size() != bob_result.key.size())
    throw std::logic_error("sifted buffers diverged: alice=" +
                           std::to_string(alice_result.key.size()) +
                           " bob=" + std::to_string(bob_result.key.size()));
  if (alice_result.tags != bob_result.tags)
    throw std::logic_error("sifted buffers reference different frame positions");

  SimResult result;
  result.metrics = bob_result.metrics;
  result.metrics.report_anomalies += alice_result.metrics.report_anomalies;
  const auto qber = compute_qber(alice_result.key, bob_result.key, bob_result.causes);
  result.metrics.qber = qber.qber;
  for (int c = 0; c < kCauseCount; ++c) result.metrics.qber_by_cause[c] = qber.by_cause[c];
  result.metrics.predicted_sift_rate_bps =
      config.budget.mu > 0.0 ? predict_sift_rate(config.budget, config.clock, config.protocol)
                             : 0.0;
  result.alice_key = std::move(alice_result.key);
  result.bob_key = std::move(bob_result.key);
  result.bob_causes = std::move(bob_result.causes);
  result.source_tags = std::move(bob_result.tags);
  return result;
}

std::vector<SweepRow> sweep_mu(const SimConfig& config, const std::vector<double>& mu_values) {
  for (size_t i = 0; i < mu_values.size(); ++i) {
    if (!(mu_values[i] > 0.0))
      throw std::invalid_argument("sweep_mu: mu values must be positive");
    if (i > 0 && !(mu_values[i] > mu_values[i - 1]))
      throw std::invalid_argument("sweep_mu: mu values must be ascending");
  }
  std::vector<SweepRow> rows;
  rows.reserve(mu_values.size());
  for (size_t i = 0; i < mu_values.size(); ++i) {
    SimConfig point = config;
    point.budget.mu = mu_values[i];
    point.seed = derive_seed(config.seed, stream_tag("sweep"), i);
    const auto result = run(point);
    rows.push_back({mu_values[i], result.metrics.sifted_rate_bps, result.metrics.qber,
                    result.metrics.frames_dropped});
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "mu,sifted_rate_bps,qber,frames_dropped\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.8f,%llu\n", r.mu, r.sifted_rate_bps, r.qber,
                  static_cast<unsigned long long>(r.frames_dropped));
    os << buf;
  }
}

JitterExperiment jitter_experiment(const SimConfig& config, uint64_t draws) {
  config.jitter.validate();
  const double bin = 12.2;
  JitterExperiment exp{TimingHistogram(bin, config.clock.bit_period_ps * 4),
                       TimingHistogram(bin, config.clock.bit_period_ps * 16)};
  RandomStream full(derive_seed(config.seed, stream_tag("jitter-bench"), 0));
  RandomStream quarter(derive_seed(config.seed, stream_tag("jitter-bench"), 1));
  for (uint64_t i = 0; i < draws; ++i) exp.full_rate.add(sample_jitter(config.jitter, full));
  for (uint64_t i = 0; i < draws; ++i) exp.quarter_rate.add(sample_jitter(config.jitter, quarter));
  return exp;
}

void write_jitter_csv(std::ostream& os, const JitterExperiment& exp) {
  os << "bin_start_ps,count_312MHz,count_78MHz\n";
  const auto& full = exp.full_rate.counts();
  const auto& quarter = exp.quarter_rate.counts();
  const size_t rows = std::max(full.size(), quarter.size());
  char buf[96];
  for (size_t i = 0; i < rows; ++i) {
    const uint64_t a = i < full.size() ? full[i] : 0;
    const uint64_t b = i < quarter.size() ? quarter[i] : 0;
    std::snprintf(buf, sizeof(buf), "%.1f,%llu,%llu\n", double(i) * exp.full_rate.bin_width_ps(),
                  static_cast<unsigned long long>(a), static_cast<unsigned long long>(b));
    os << buf;
  }
}

std::string format_metrics(const SimMetrics& m) {
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "sifted_bits            %llu\n"
                "sifted_rate_bps        %.1f\n"
                "qber                   %.6f\n"
                "  signal               %.6f\n"
                "  intersymbol          %.6f\n"
                "  background           %.6f\n"
                "  leak                 %.6f\n"
                "frames offered/processed/dropped  %llu/%llu/%llu\n"
                "mask_acceptance        %.4f\n"
                "coincidence_discards   %llu\n"
                "pulse_detections       %llu\n"
                "background_detections  %llu\n"
                "reports                %llu (anomalies %llu)\n"
                "duration_s             %.6f\n"
                "predicted_sift_rate    %.1f bps (%s)\n",
                static_cast<unsigned long long>(m.sifted_bits), m.sifted_rate_bps, m.qber,
                m.qber_by_cause[0], m.qber_by_cause[1], m.qber_by_cause[2], m.qber_by_cause[3],
                static_cast<unsigned long long>(m.frames_offered),
                static_cast<unsigned long long>(m.frames_processed),
                static_cast<unsigned long long>(m.frames_dropped), m.mask_acceptance,
                static_cast<unsigned long long>(m.coincidence_discards),
                static_cast<unsigned long long>(m.pulse_detections),
                static_cast<unsigned long long>(m.background_detections),
                static_cast<unsigned long long>(m.reports),
                static_cast<unsigned long long>(m.report_anomalies), m.duration_s,
                m.predicted_sift_rate_bps, kPredictSiftRateScope);
  return buf;
}

}  // namespace qkdlink
