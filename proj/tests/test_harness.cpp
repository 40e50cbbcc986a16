// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "qkdlink/engine.hpp"
#include "qkdlink/harness.hpp"
#include "qkdlink/transport.hpp"

using namespace qkdlink;

namespace {

SimConfig night_config(double mu, double duration_s, uint64_t seed) {
  SimConfig cfg;
  cfg.budget.mu = mu;
  cfg.duration_s = duration_s;
  cfg.seed = seed;
  return cfg;
}

SimConfig ideal_config(double duration_s, uint64_t seed) {
  SimConfig cfg;
  cfg.force_single_photon = true;
  cfg.budget.mu = 1.0;
  cfg.budget.path_loss_db = 0.0;
  cfg.budget.filter_transmissivity = 1.0;
  cfg.budget.quantum_efficiency = 1.0;
  cfg.budget.extinction_ratio = std::numeric_limits<double>::infinity();
  cfg.background_overridden = true;
  cfg.budget.background_rate_hz = 0.0;
  cfg.jitter = JitterModel{};  // delta response at zero offset
  cfg.jitter.core_sigma_ps = 0.0;
  cfg.capacity.enabled = false;
  cfg.duration_s = duration_s;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("same seed replays byte-identical results") {
  const auto cfg = night_config(0.15, 0.004, 11);
  const auto a = run(cfg);
  const auto b = run(cfg);
  CHECK(a.alice_key == b.alice_key);
  CHECK(a.bob_key == b.bob_key);
  CHECK(a.metrics.sifted_bits == b.metrics.sifted_bits);
  CHECK(a.metrics.qber == b.metrics.qber);
  CHECK(a.metrics.reports == b.metrics.reports);
  CHECK(a.metrics.coincidence_discards == b.metrics.coincidence_discards);

  const auto c = run(night_config(0.15, 0.004, 12));
  CHECK(a.bob_key != c.bob_key);
}

TEST_CASE("sifted buffers stay aligned and reports turn into bits") {
  const auto res = run(night_config(0.15, 0.01, 3));
  CHECK(res.alice_key.size() == res.bob_key.size());
  CHECK(res.bob_causes.size() == res.bob_key.size());
  // provenance tags are ordered by frame, then bit position
  REQUIRE(res.source_tags.size() == res.bob_key.size());
  for (size_t i = 1; i < res.source_tags.size(); ++i) {
    const auto& prev = res.source_tags[i - 1];
    const auto& cur = res.source_tags[i];
    CHECK((prev.frame_number < cur.frame_number ||
           (prev.frame_number == cur.frame_number && prev.bit_position < cur.bit_position)));
  }
  // B92: every report from a retained frame becomes one sifted bit
  CHECK(res.metrics.sifted_bits <= res.metrics.reports);
  CHECK(res.metrics.frames_dropped == 0);
  CHECK(res.metrics.sifted_bits == res.metrics.reports);
  CHECK(res.metrics.frames_offered == res.metrics.frames_processed);
  CHECK(res.metrics.report_anomalies == 0);
}

TEST_CASE("ideal pipeline: zero errors and the B92 conclusive fraction") {
  const auto res = run(ideal_config(0.002, 17));
  CHECK(res.metrics.qber == 0.0);
  CHECK(res.alice_key == res.bob_key);
  const double fraction =
      double(res.metrics.sifted_bits) / double(ideal_config(0.002, 17).slot_count());
  CHECK(fraction == doctest::Approx(0.25).epsilon(0.02));
  CHECK(res.metrics.mask_acceptance == doctest::Approx(1.0));
  CHECK(res.metrics.qber_by_cause[int(DetectionCause::Leak)] == 0.0);
  CHECK(res.metrics.qber_by_cause[int(DetectionCause::Intersymbol)] == 0.0);

  // with losses restored the rate is f_tx * survival * QE / 4
  auto lossy = ideal_config(0.005, 19);
  lossy.budget.path_loss_db = 5.0;
  lossy.budget.filter_transmissivity = 0.48;
  lossy.budget.quantum_efficiency = 0.5;
  const auto res2 = run(lossy);
  CHECK(res2.metrics.qber == 0.0);
  const double expected = lossy.budget.survival_probability() * 0.5 * 0.25;
  CHECK(double(res2.metrics.sifted_bits) / double(lossy.slot_count()) ==
        doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("simulated rate tracks the analytic predictor times mask acceptance") {
  for (double mu : {0.1, 0.2}) {
    auto cfg = night_config(mu, 0.05, 23);
    cfg.capacity.enabled = false;
    const auto res = run(cfg);
    const double expected = res.metrics.predicted_sift_rate_bps * res.metrics.mask_acceptance;
    INFO("mu=", mu);
    CHECK(res.metrics.sifted_rate_bps == doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("empty source leaves only background coincidences") {
  const auto res = run(night_config(0.0, 0.05, 13));
  CHECK(res.metrics.pulse_detections == 0);
  CHECK(res.metrics.sifted_bits > 0);  // night background still clicks occasionally
  for (auto cause : res.bob_causes) CHECK(cause == DetectionCause::Background);
  // background bits carry no correlation with Alice's data
  CHECK(res.metrics.qber > 0.2);
}

TEST_CASE("daylight backgrounds dominate a weak source") {
  auto day = night_config(0.01, 0.02, 31);
  day.daylight = true;
  auto night = night_config(0.01, 0.02, 31);
  const auto day_res = run(day);
  const auto night_res = run(night);
  CHECK(day_res.metrics.qber > night_res.metrics.qber);
  CHECK(day_res.metrics.qber > 0.2);  // background bits are coin flips
  CHECK(day_res.metrics.qber_by_cause[int(DetectionCause::Background)] >
        0.8 * day_res.metrics.qber);
}

TEST_CASE("qber decomposition singles out the extinction leak") {
  auto cfg = night_config(0.15, 0.02, 5);
  const auto res = run(cfg);
  const double leak = res.metrics.qber_by_cause[int(DetectionCause::Leak)];
  const double intersymbol = res.metrics.qber_by_cause[int(DetectionCause::Intersymbol)];
  CHECK(leak == doctest::Approx(0.004).epsilon(0.3));
  CHECK(intersymbol == doctest::Approx(0.0025).epsilon(0.5));
  CHECK(res.metrics.qber_by_cause[int(DetectionCause::Signal)] == 0.0);

  // infinite extinction removes the leak errors entirely
  auto pure = cfg;
  pure.budget.extinction_ratio = std::numeric_limits<double>::infinity();
  const auto pure_res = run(pure);
  CHECK(pure_res.metrics.qber_by_cause[int(DetectionCause::Leak)] == 0.0);
  CHECK(pure_res.metrics.qber < res.metrics.qber);
}

TEST_CASE("bb84 sessions sift into identical aligned buffers") {
  auto cfg = night_config(0.15, 0.01, 29);
  cfg.protocol = ProtocolKind::BB84;
  cfg.capacity.enabled = false;  // the doubled report rate would saturate it
  const auto res = run(cfg);
  CHECK(res.alice_key.size() == res.bob_key.size());
  // basis filtering keeps roughly half of the reports
  CHECK(double(res.metrics.sifted_bits) / double(res.metrics.reports) ==
        doctest::Approx(0.5).epsilon(0.05));
  CHECK(res.metrics.qber < 0.05);

  // with the capacity model on, the doubled BB84 load drops frames
  auto loaded = cfg;
  loaded.capacity.enabled = true;
  const auto saturated = run(loaded);
  CHECK(saturated.metrics.frames_dropped > 0);
  CHECK(saturated.alice_key.size() == saturated.bob_key.size());
}

TEST_CASE("capacity saturation drops frames and the buffers stay aligned") {
  auto cfg = night_config(0.4, 0.02, 41);
  const auto res = run(cfg);
  CHECK(res.metrics.frames_dropped > 0);
  CHECK(res.metrics.frames_processed + res.metrics.frames_dropped == res.metrics.frames_offered);
  CHECK(res.alice_key.size() == res.bob_key.size());
  // the plateau pins the throughput near the service rate
  CHECK(res.metrics.sifted_rate_bps == doctest::Approx(1.0e6).epsilon(0.1));

  // saturation does not distort the error rate: QBER stays flat and
  // dominated by quantum-channel causes, not background
  const auto deeper = run(night_config(0.3, 0.02, 41));
  CHECK(res.metrics.qber == doctest::Approx(deeper.metrics.qber).epsilon(0.4));
  CHECK(res.metrics.qber_by_cause[int(DetectionCause::Background)] < 0.2 * res.metrics.qber);
}

TEST_CASE("mu sweep rises with mu and reuses derived seeds deterministically") {
  auto cfg = night_config(0.1, 0.002, 77);
  cfg.capacity.enabled = false;
  const std::vector<double> mus{0.05, 0.1, 0.2};
  const auto rows = sweep_mu(cfg, mus);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].sifted_rate_bps < rows[1].sifted_rate_bps);
  CHECK(rows[1].sifted_rate_bps < rows[2].sifted_rate_bps);

  std::ostringstream a, b;
  write_sweep_csv(a, rows);
  write_sweep_csv(b, sweep_mu(cfg, mus));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("mu,sifted_rate_bps,qber,frames_dropped\n", 0) == 0);

  CHECK_THROWS_AS(sweep_mu(cfg, {0.2, 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(sweep_mu(cfg, {0.0, 0.1}), std::invalid_argument);
}

TEST_CASE("jitter experiment: rate-independent width, zero-jitter collapses") {
  SimConfig cfg;
  cfg.seed = 3;
  const auto exp = jitter_experiment(cfg, 400000);
  const auto f_full = exp.full_rate.fwhm_ps();
  const auto f_quarter = exp.quarter_rate.fwhm_ps();
  REQUIRE(f_full.has_value());
  REQUIRE(f_quarter.has_value());
  CHECK(*f_full == doctest::Approx(550.0).epsilon(25.0 / 550.0));
  CHECK(*f_quarter == doctest::Approx(*f_full).epsilon(0.05));
  CHECK(exp.full_rate.total() == 400000);

  std::ostringstream os;
  write_jitter_csv(os, exp);
  CHECK(os.str().rfind("bin_start_ps,count_312MHz,count_78MHz\n", 0) == 0);

  SimConfig zero = cfg;
  zero.jitter = JitterModel{};
  zero.jitter.core_sigma_ps = 0.0;
  const auto delta = jitter_experiment(zero, 1000);
  int occupied = 0;
  for (auto c : delta.full_rate.counts())
    if (c) ++occupied;
  CHECK(occupied == 1);
}

TEST_CASE("config file round trip and error reporting") {
  SimConfig cfg;
  parse_config_text(cfg,
                    "# comment line\n"
                    "mu = 0.25\n"
                    "protocol = bb84\n"
                    "daylight = true\n"
                    "extinction_ratio = inf\n"
                    "seed = 99\n"
                    "queue_depth = 7\n");
  CHECK(cfg.budget.mu == 0.25);
  CHECK(cfg.protocol == ProtocolKind::BB84);
  CHECK(cfg.daylight);
  CHECK(std::isinf(cfg.budget.extinction_ratio));
  CHECK(cfg.seed == 99);
  CHECK(cfg.capacity.queue_depth == 7);
  CHECK(cfg.effective_background_hz() == kDaylightBackgroundHz);

  // explicit background beats the daylight default
  parse_config_text(cfg, "background_rate_hz = 5000\n");
  CHECK(cfg.effective_background_hz() == 5000.0);

  SimConfig bad;
  CHECK_THROWS_WITH_AS(parse_config_text(bad, "unknown_knob = 1\n"),
                       doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(bad, "mu = fast\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(bad, "protocol = b93\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(bad, "just a line\n"), std::invalid_argument);

  // serialized text parses back to the same effective configuration
  SimConfig original;
  original.budget.mu = 0.17;
  original.protocol = ProtocolKind::BB84;
  original.capacity.queue_depth = 3;
  SimConfig reparsed;
  parse_config_text(reparsed, config_to_text(original));
  CHECK(reparsed.budget.mu == doctest::Approx(0.17));
  CHECK(reparsed.protocol == ProtocolKind::BB84);
  CHECK(reparsed.capacity.queue_depth == 3);
  CHECK(config_to_text(reparsed) == config_to_text(original));
}

TEST_CASE("external entropy file feeds the frame source") {
  const auto path = temp_path("qkdlink_entropy_test.bin");
  {
    std::ofstream out(path, std::ios::binary);
    RandomStream rng(123);
    for (int i = 0; i < kFrameBits / 8; ++i) out.put(char(rng.next_u64() & 0xff));
  }
  SimConfig cfg = night_config(0.15, 1e-5, 7);  // one frame
  cfg.entropy_file = path;
  REQUIRE(cfg.frame_count() == 1);
  const auto a = run(cfg);
  const auto b = run(cfg);
  CHECK(a.alice_key == b.alice_key);
  CHECK(a.alice_key.size() > 0);
  CHECK(a.alice_key == a.bob_key);  // night run this short sees no background errors

  // a truncated entropy file is an error once a second frame is needed
  SimConfig two = cfg;
  two.duration_s = 2.0 * double(kFrameBits) / two.clock.pulse_rate_hz();
  CHECK(two.frame_count() == 2);
  CHECK_THROWS_WITH_AS(run(two), doctest::Contains("entropy_file"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("two-session drivers over tcp match the in-process run") {
  const auto cfg = night_config(0.15, 0.004, 909);
  const auto reference = run(cfg);

  TcpListener listener("127.0.0.1:0");
  EndpointResult alice_res, bob_res;
  std::thread alice_thread([&] {
    Endpoint ep(Role::Alice, tcp_connect("127.0.0.1:" + std::to_string(listener.port())));
    alice_res = run_alice_session(cfg, ep);
  });
  {
    Endpoint ep(Role::Bob, listener.accept_one());
    bob_res = run_bob_session(cfg, ep);
  }
  alice_thread.join();

  CHECK(alice_res.key == reference.alice_key);
  CHECK(bob_res.key == reference.bob_key);
  CHECK(bob_res.metrics.reports == reference.metrics.reports);
  CHECK(std::isnan(alice_res.metrics.qber));
}

TEST_CASE("config validation rejects broken setups") {
  SimConfig cfg;
  cfg.duration_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.budget.mu = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.frame_done_interval = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
