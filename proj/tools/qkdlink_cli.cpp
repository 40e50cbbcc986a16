// SPDX-License-Identifier: Apache-2.0
//
// qkdlink command-line front end: run single simulations (in-process or as
// one endpoint of a two-process session), sweep the mean photon number,
// reproduce the detector-jitter histograms, and calibrate the jitter model.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qkdlink/engine.hpp"
#include "qkdlink/harness.hpp"
#include "qkdlink/transport.hpp"

namespace {

using namespace qkdlink;

struct CommonOpts {
  std::string config_path;
  std::optional<double> mu;
  std::optional<std::string> protocol;
  bool daylight = false;
  std::optional<double> duration_s;
  std::optional<uint64_t> seed;
  bool no_capacity = false;
  bool force_single_photon = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_mu = true) {
  cmd->add_option("--config", o.config_path, "flat key=value config file");
  if (with_mu) cmd->add_option("--mu", o.mu, "mean photon number per pulse");
  cmd->add_option("--protocol", o.protocol, "b92 or bb84");
  cmd->add_flag("--daylight", o.daylight, "use the daytime background rate");
  cmd->add_option("--duration-s", o.duration_s, "simulated seconds");
  cmd->add_option("--seed", o.seed, "64-bit random seed");
  cmd->add_flag("--no-capacity", o.no_capacity, "disable the frame-processing capacity model");
  cmd->add_flag("--force-single-photon", o.force_single_photon,
                "exactly one photon per pulse (ideal-source rig)");
}

SimConfig build_config(const CommonOpts& o) {
  SimConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (o.mu) cfg.budget.mu = *o.mu;
  if (o.protocol) {
    if (*o.protocol == "b92") cfg.protocol = ProtocolKind::B92;
    else if (*o.protocol == "bb84") cfg.protocol = ProtocolKind::BB84;
    else throw CLI::ValidationError("--protocol must be b92 or bb84");
  }
  if (o.daylight) cfg.daylight = true;
  if (o.duration_s) cfg.duration_s = *o.duration_s;
  if (o.seed) cfg.seed = *o.seed;
  if (o.no_capacity) cfg.capacity.enabled = false;
  if (o.force_single_photon) cfg.force_single_photon = true;
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << text;
}

void write_key_file(const std::string& path, const BitVector& key) {
  std::ostringstream os;
  os << "bits " << key.size() << "\n" << key.to_hex() << "\n";
  write_file(path, os.str());
}

std::string sweep_csv_text(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  write_sweep_csv(os, rows);
  return os.str();
}

int cmd_run(const CommonOpts& common, const std::string& listen, const std::string& connect,
            const std::string& out, const std::string& key_out, const std::string& port_file) {
  SimConfig cfg = build_config(common);
  if (!listen.empty() && !connect.empty())
    throw CLI::ValidationError("--listen and --connect are mutually exclusive");

  if (!listen.empty()) {
    TcpListener listener(listen);
    if (!port_file.empty()) write_file(port_file, std::to_string(listener.port()) + "\n");
    std::fprintf(stderr, "listening on port %u\n", unsigned(listener.port()));
    Endpoint ep(Role::Bob, listener.accept_one());
    const auto res = run_bob_session(cfg, ep);
    std::cout << format_metrics(res.metrics);
    if (!key_out.empty()) write_key_file(key_out, res.key);
    return 0;
  }
  if (!connect.empty()) {
    Endpoint ep(Role::Alice, tcp_connect(connect));
    const auto res = run_alice_session(cfg, ep);
    std::cout << format_metrics(res.metrics);
    if (!key_out.empty()) write_key_file(key_out, res.key);
    return 0;
  }

  const auto res = run(cfg);
  std::cout << format_metrics(res.metrics);
  if (!key_out.empty()) {
    write_key_file(key_out + ".alice.key", res.alice_key);
    write_key_file(key_out + ".bob.key", res.bob_key);
  }
  if (!out.empty()) {
    std::vector<SweepRow> row{{cfg.budget.mu, res.metrics.sifted_rate_bps, res.metrics.qber,
                               res.metrics.frames_dropped}};
    write_file(out, sweep_csv_text(row));
  }
  return 0;
}

int cmd_sweep(const CommonOpts& common, const std::vector<double>& mus, const std::string& out) {
  SimConfig cfg = build_config(common);
  const auto rows = sweep_mu(cfg, mus);
  const auto text = sweep_csv_text(rows);
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);
  return 0;
}

int cmd_jitter(const CommonOpts& common, uint64_t draws, const std::string& out) {
  SimConfig cfg = build_config(common);
  const auto exp = jitter_experiment(cfg, draws);
  std::ostringstream os;
  write_jitter_csv(os, exp);
  if (out.empty())
    std::cout << os.str();
  else
    write_file(out, os.str());
  const auto f1 = exp.full_rate.fwhm_ps();
  const auto f2 = exp.quarter_rate.fwhm_ps();
  std::fprintf(stderr, "fwhm_312MHz_ps %s\nfwhm_78MHz_ps %s\n",
               f1 ? std::to_string(*f1).c_str() : "none",
               f2 ? std::to_string(*f2).c_str() : "none");
  return 0;
}

int cmd_calibrate(double acceptance, double leakage, double fwhm, const std::string& out) {
  JitterTargets targets{acceptance, leakage, fwhm};
  ClockBase clock;
  const auto model = fit_jitter_model(targets, clock);
  const auto stats = jitter_mask_stats(model, clock);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "jitter_core_sigma_ps = %.6f\n"
                "jitter_tail_fraction = %.6f\n"
                "jitter_tail_decay_ps = %.6f\n"
                "jitter_offset_ps = %.6f\n",
                model.core_sigma_ps, model.tail_fraction, model.tail_decay_ps, model.offset_ps);
  std::cout << buf;
  std::fprintf(stderr, "achieved: acceptance=%.6f leakage=%.6f fwhm=%.2f ps\n", stats.acceptance,
               stats.leakage, jitter_density_fwhm(model));
  if (!out.empty()) write_file(out, buf);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qkdlink: synchronous free-space QKD link simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts, jitter_opts;
  std::string listen, connect, run_out, key_out, port_file;
  auto* run_cmd = app.add_subcommand("run", "run one simulated session");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--listen", listen, "act as Bob; accept one peer on host:port");
  run_cmd->add_option("--connect", connect, "act as Alice; dial a listening peer at host:port");
  run_cmd->add_option("--out", run_out, "write a one-row metrics CSV");
  run_cmd->add_option("--key-out", key_out, "write the sifted key(s) to file(s)");
  run_cmd->add_option("--port-file", port_file, "write the bound port (with --listen)");

  std::vector<double> sweep_mus;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep the mean photon number");
  add_common(sweep_cmd, sweep_opts, /*with_mu=*/false);
  sweep_cmd->add_option("--mu", sweep_mus, "ascending mu values")
      ->delimiter(',')
      ->required();
  sweep_cmd->add_option("--out", sweep_out, "output CSV path (default stdout)");

  uint64_t jitter_draws = 1000000;
  std::string jitter_out;
  auto* jitter_cmd = app.add_subcommand("jitter", "folded APD arrival-time histograms");
  add_common(jitter_cmd, jitter_opts);
  jitter_cmd->add_option("--draws", jitter_draws, "samples per transmission rate");
  jitter_cmd->add_option("--out", jitter_out, "output CSV path (default stdout)");

  double cal_acceptance = 0.93, cal_leakage = 0.005, cal_fwhm = 550.0;
  std::string cal_out;
  auto* cal_cmd = app.add_subcommand("calibrate", "fit the jitter model to mask targets");
  cal_cmd->add_option("--acceptance", cal_acceptance, "own-gate acceptance target");
  cal_cmd->add_option("--leakage", cal_leakage, "later-gate leakage target");
  cal_cmd->add_option("--fwhm", cal_fwhm, "composite FWHM target in ps (0 skips)");
  cal_cmd->add_option("--out", cal_out, "write fitted constants as config keys");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed())
      return cmd_run(run_opts, listen, connect, run_out, key_out, port_file);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, sweep_mus, sweep_out);
    if (jitter_cmd->parsed()) return cmd_jitter(jitter_opts, jitter_draws, jitter_out);
    if (cal_cmd->parsed()) return cmd_calibrate(cal_acceptance, cal_leakage, cal_fwhm, cal_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
