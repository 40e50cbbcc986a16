// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qkdlink/detector.hpp"
#include "qkdlink/jitter_fit.hpp"

using namespace qkdlink;

namespace {

// Monte Carlo mask statistics of a jitter model against the periodic gate.
struct McMask {
  double acceptance, leakage, other;
};

McMask mc_mask(const JitterModel& model, const ClockBase& clock, int n, uint64_t seed) {
  RandomStream rng(seed);
  const double gate = 2.0 * clock.bit_period_ps;
  const double period = clock.pulse_period_ps();
  int acc = 0, leak = 0;
  for (int i = 0; i < n; ++i) {
    const double d = sample_jitter(model, rng);
    if (d >= 0.0 && d < gate) {
      ++acc;
    } else if (d >= period) {
      const double in_period = std::fmod(d, period);
      if (in_period < gate) ++leak;
    }
  }
  return {double(acc) / n, double(leak) / n, double(n - acc - leak) / n};
}

}  // namespace

TEST_CASE("delta jitter model returns the offset exactly") {
  JitterModel delta;
  delta.core_sigma_ps = 0.0;
  delta.tail_fraction = 0.0;
  delta.offset_ps = 123.0;
  RandomStream rng(1);
  for (int i = 0; i < 100; ++i) CHECK(sample_jitter(delta, rng) == 123.0);
}

TEST_CASE("calibrated jitter: empirical FWHM near 550 ps, mass within spans") {
  const auto model = JitterModel::calibrated_default();
  RandomStream rng(77);
  TimingHistogram hist(12.2, 12800.0);
  const int n = 1000000;
  int within_3500 = 0;
  for (int i = 0; i < n; ++i) {
    const double d = sample_jitter(model, rng);
    hist.add(d);
    // span measured around the gate-centered response peak at +800 ps
    if (d > 800.0 - 1000.0 && d < 800.0 + 2500.0) ++within_3500;
  }
  const auto fwhm = hist.fwhm_ps();
  REQUIRE(fwhm.has_value());
  CHECK(*fwhm == doctest::Approx(550.0).epsilon(10.0 / 550.0));
  // detection events spread over roughly 3.5 ns
  CHECK(double(within_3500) / n > 0.99);
}

TEST_CASE("detect fires with the quantum efficiency and tags provenance") {
  LinkBudget budget;
  JitterModel zero;
  zero.core_sigma_ps = 0.0;
  RandomStream rng(5);

  budget.quantum_efficiency = 0.0;
  for (int i = 0; i < 1000; ++i)
    CHECK(!detect(1000.0, 0, 7, DetectionCause::Signal, budget, zero, rng).has_value());

  budget.quantum_efficiency = 1.0;
  const auto ev = detect(1000.0, 1, 7, DetectionCause::Leak, budget, zero, rng);
  REQUIRE(ev.has_value());
  CHECK(ev->time_ps == 1000.0);
  CHECK(ev->detector_id == 1);
  CHECK(ev->slot_index == 7);
  CHECK(ev->cause == DetectionCause::Leak);

  budget.quantum_efficiency = 0.5;
  int fired = 0;
  for (int i = 0; i < 10000; ++i)
    if (detect(0.0, 0, 0, DetectionCause::Signal, budget, zero, rng)) ++fired;
  CHECK(double(fired) / 10000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("gate arithmetic over the 800 ps bin grid") {
  ClockBase clock;
  const auto at = [&](double t) {
    return gate(DetectionEvent{t, 0, 0, DetectionCause::Signal}, clock);
  };

  const auto center = at(0.0);
  CHECK(center.accepted);
  CHECK(center.bin_in_group == 0);
  CHECK(center.group_index == 0);
  CHECK(center.frame_bit_position == 0);

  CHECK(at(799.9).bin_in_group == 0);
  CHECK(at(800.0).bin_in_group == 1);
  CHECK(at(800.0).accepted);
  CHECK(at(1600.0).bin_in_group == 2);
  CHECK(!at(1600.0).accepted);
  CHECK(!at(2400.0).accepted);
  CHECK(at(3200.0).group_index == 1);
  CHECK(at(3200.0).accepted);
  CHECK(at(3200.0 * 2048.0).frame_bit_position == 0);  // wraps at the frame length
  CHECK(at(3200.0 * 2049.0).frame_bit_position == 1);

  CHECK_THROWS_AS(at(-1.0), std::invalid_argument);
}

TEST_CASE("calibrated mask acceptance and next-gate leakage by Monte Carlo") {
  ClockBase clock;
  const auto model = JitterModel::calibrated_default();
  const auto mc = mc_mask(model, clock, 1000000, 1234);
  CHECK(mc.acceptance == doctest::Approx(0.93).epsilon(0.01 / 0.93));
  CHECK(mc.leakage == doctest::Approx(0.005).epsilon(0.4));
  CHECK(mc.acceptance + mc.leakage + mc.other == doctest::Approx(1.0));
}

TEST_CASE("mask fractions: quadrature agrees with Monte Carlo within 3 sigma") {
  ClockBase clock;
  std::vector<JitterModel> models;
  models.push_back(JitterModel::calibrated_default());
  JitterModel pure_core;
  pure_core.offset_ps = 800.0;
  models.push_back(pure_core);
  JitterModel heavy_tail = JitterModel::calibrated_default();
  heavy_tail.tail_fraction = 0.5;
  heavy_tail.tail_decay_ps = 1200.0;
  models.push_back(heavy_tail);

  const int n = 1000000;
  for (size_t m = 0; m < models.size(); ++m) {
    const auto stats = jitter_mask_stats(models[m], clock);
    const auto mc = mc_mask(models[m], clock, n, 1000 + m);
    const double sig_acc = std::sqrt(stats.acceptance * (1 - stats.acceptance) / n);
    const double sig_leak = std::sqrt(stats.leakage * (1 - stats.leakage) / n) + 1e-9;
    INFO("model ", m);
    CHECK(std::abs(mc.acceptance - stats.acceptance) < 3.0 * sig_acc + 1e-6);
    CHECK(std::abs(mc.leakage - stats.leakage) < 3.0 * sig_leak);
    // integral over all mask windows plus the complement is a density total
    CHECK(stats.acceptance + stats.leakage <= 1.0);
  }
}

TEST_CASE("coincidence filter: spec examples") {
  ClockBase clock;
  const auto decision = [&](double t, uint8_t det) {
    return gate(DetectionEvent{t, det, 0, DetectionCause::Signal}, clock);
  };

  const std::vector<GateDecision> one = {decision(100.0, 0)};
  const auto kept = coincidence_filter(one);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].detector_id == 0);

  const std::vector<GateDecision> both = {decision(100.0, 0), decision(200.0, 1)};
  CHECK(coincidence_filter(both).empty());

  const std::vector<GateDecision> twice = {decision(300.0, 0), decision(100.0, 0)};
  const auto collapsed = coincidence_filter(twice);
  REQUIRE(collapsed.size() == 1);
  CHECK(collapsed[0].time_ps == 100.0);
}

TEST_CASE("coincidence filter: brute force over all small groups") {
  // all groups of up to three events: detector x accepted-bin x time order
  ClockBase clock;
  std::vector<GateDecision> pool;
  for (uint8_t det : {0, 1})
    for (double t : {50.0, 900.0, 1700.0})  // bins 0, 1, 2 of group 0
      pool.push_back(gate(DetectionEvent{t, det, 0, DetectionCause::Signal}, clock));

  std::vector<std::vector<GateDecision>> groups;
  const size_t n = pool.size();
  for (size_t a = 0; a < n; ++a) {
    groups.push_back({pool[a]});
    for (size_t b = 0; b < n; ++b) {
      groups.push_back({pool[a], pool[b]});
      for (size_t c = 0; c < n; ++c) groups.push_back({pool[a], pool[b], pool[c]});
    }
  }

  for (const auto& group : groups) {
    const auto once = coincidence_filter(group);
    CHECK(once.size() <= group.size());
    CHECK(once.size() <= 1);
    const auto twice = coincidence_filter(once);
    CHECK(twice.size() == once.size());
    if (!once.empty()) {
      CHECK(once == twice);
      CHECK(once[0].accepted);
      // the survivor is the earliest accepted decision of its detector
      for (const auto& d : group)
        if (d.accepted && d.detector_id == once[0].detector_id)
          CHECK(once[0].time_ps <= d.time_ps);
    }
  }
}

TEST_CASE("folded histogram conserves counts and handles edge shapes") {
  std::vector<DetectionEvent> events;
  for (int i = 0; i < 1000; ++i)
    events.push_back({500.0 + 3200.0 * (i % 7), 0, 0, DetectionCause::Signal});
  const auto h = histogram(events, 12.2, 3200.0);
  CHECK(h.total() == 1000);
  uint64_t sum = 0;
  int occupied = 0;
  for (auto c : h.counts()) {
    sum += c;
    if (c) ++occupied;
  }
  CHECK(sum == 1000);
  CHECK(occupied == 1);  // delta pile-up folds into a single bin
  const auto fwhm = h.fwhm_ps();
  REQUIRE(fwhm.has_value());
  CHECK(*fwhm <= 12.2 + 1e-9);

  const auto empty = histogram({}, 12.2, 3200.0);
  CHECK(empty.total() == 0);
  CHECK(!empty.fwhm_ps().has_value());
}

TEST_CASE("histogram csv export") {
  std::vector<DetectionEvent> events{{100.0, 0, 0, DetectionCause::Signal}};
  const auto h = histogram(events, 100.0, 400.0);
  std::ostringstream os;
  h.write_csv(os);
  CHECK(os.str() == "bin_start_ps,count\n0.0,0\n100.0,1\n200.0,0\n300.0,0\n");
}

TEST_CASE("jitter model validation") {
  JitterModel bad = JitterModel::calibrated_default();
  bad.tail_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = JitterModel::calibrated_default();
  bad.tail_fraction = 0.1;
  bad.tail_decay_ps = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("calibration fit reproduces the committed defaults and its targets") {
  ClockBase clock;
  const auto fitted = fit_jitter_model(JitterTargets{}, clock);
  const auto defaults = JitterModel::calibrated_default();
  CHECK(fitted.core_sigma_ps == doctest::Approx(defaults.core_sigma_ps).epsilon(0.005));
  CHECK(fitted.tail_fraction == doctest::Approx(defaults.tail_fraction).epsilon(0.01));
  CHECK(fitted.tail_decay_ps == doctest::Approx(defaults.tail_decay_ps).epsilon(0.01));
  CHECK(fitted.offset_ps == doctest::Approx(800.0));

  const auto stats = jitter_mask_stats(fitted, clock);
  CHECK(stats.acceptance == doctest::Approx(0.93).epsilon(1e-4));
  CHECK(stats.leakage == doctest::Approx(0.005).epsilon(1e-3));
  CHECK(jitter_density_fwhm(fitted) == doctest::Approx(550.0).epsilon(0.001));

  // the density itself integrates to one
  const double total = jitter_density_integral(fitted, -3000.0, 20000.0);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("calibration degenerate and infeasible targets") {
  ClockBase clock;
  const auto delta = fit_jitter_model(JitterTargets{1.0, 0.0, 0.0}, clock);
  CHECK(delta.core_sigma_ps == 0.0);
  CHECK(delta.tail_fraction == 0.0);
  const auto stats = jitter_mask_stats(delta, clock);
  CHECK(stats.acceptance == 1.0);
  CHECK(stats.leakage == 0.0);

  CHECK_THROWS_WITH_AS(fit_jitter_model(JitterTargets{0.2, 0.4, 550.0}, clock),
                       doctest::Contains("achievable frontier"), std::runtime_error);
}
