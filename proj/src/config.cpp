// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qkdlink/harness.hpp"

namespace qkdlink {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  return v;
}

int64_t parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + value + "'");
}

void apply_key(SimConfig& c, const std::string& key, const std::string& value) {
  if (key == "mu") c.budget.mu = parse_double(key, value);
  else if (key == "path_loss_db") c.budget.path_loss_db = parse_double(key, value);
  else if (key == "filter_transmissivity") c.budget.filter_transmissivity = parse_double(key, value);
  else if (key == "quantum_efficiency") c.budget.quantum_efficiency = parse_double(key, value);
  else if (key == "extinction_ratio") c.budget.extinction_ratio = parse_double(key, value);
  else if (key == "background_rate_hz") {
    c.budget.background_rate_hz = parse_double(key, value);
    c.background_overridden = true;
  } else if (key == "splitter_imbalance") c.budget.splitter_imbalance = parse_double(key, value);
  else if (key == "bit_period_ps") c.clock.bit_period_ps = parse_double(key, value);
  else if (key == "pulse_spacing_bits") c.clock.pulse_spacing_bits = int(parse_int(key, value));
  else if (key == "pulse_width_ps") c.clock.pulse_width_ps = parse_double(key, value);
  else if (key == "phase_offset_ps") c.clock.phase_offset_ps = parse_double(key, value);
  else if (key == "jitter_core_sigma_ps") c.jitter.core_sigma_ps = parse_double(key, value);
  else if (key == "jitter_tail_fraction") c.jitter.tail_fraction = parse_double(key, value);
  else if (key == "jitter_tail_decay_ps") c.jitter.tail_decay_ps = parse_double(key, value);
  else if (key == "jitter_offset_ps") c.jitter.offset_ps = parse_double(key, value);
  else if (key == "dead_time_ps") c.jitter.dead_time_ps = parse_double(key, value);
  else if (key == "service_rate_hz") c.capacity.service_rate_hz = parse_double(key, value);
  else if (key == "queue_depth") c.capacity.queue_depth = int(parse_int(key, value));
  else if (key == "capacity_enabled") c.capacity.enabled = parse_bool(key, value);
  else if (key == "protocol") {
    if (value == "b92") c.protocol = ProtocolKind::B92;
    else if (value == "bb84") c.protocol = ProtocolKind::BB84;
    else throw std::invalid_argument("config: protocol must be b92 or bb84, got '" + value + "'");
  } else if (key == "duration_s") c.duration_s = parse_double(key, value);
  else if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "daylight") c.daylight = parse_bool(key, value);
  else if (key == "force_single_photon") c.force_single_photon = parse_bool(key, value);
  else if (key == "frame_done_interval") c.frame_done_interval = int(parse_int(key, value));
  else if (key == "entropy_file") c.entropy_file = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

}  // namespace

void parse_config_text(SimConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + line + "'");
    apply_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  SimConfig config;
  parse_config_text(config, buf.str());
  return config;
}

std::string config_to_text(const SimConfig& c) {
  char buf[4096];
  std::snprintf(
      buf, sizeof(buf),
      "mu = %.6f\n"
      "path_loss_db = %.6f\n"
      "filter_transmissivity = %.6f\n"
      "quantum_efficiency = %.6f\n"
      "extinction_ratio = %.6f\n"
      "background_rate_hz = %.6f\n"
      "splitter_imbalance = %.6f\n"
      "bit_period_ps = %.6f\n"
      "pulse_spacing_bits = %d\n"
      "pulse_width_ps = %.6f\n"
      "phase_offset_ps = %.6f\n"
      "jitter_core_sigma_ps = %.6f\n"
      "jitter_tail_fraction = %.6f\n"
      "jitter_tail_decay_ps = %.6f\n"
      "jitter_offset_ps = %.6f\n"
      "dead_time_ps = %.6f\n"
      "service_rate_hz = %.6f\n"
      "queue_depth = %d\n"
      "capacity_enabled = %s\n"
      "protocol = %s\n"
      "duration_s = %.6f\n"
      "seed = %llu\n"
      "daylight = %s\n"
      "force_single_photon = %s\n"
      "frame_done_interval = %d\n",
      c.budget.mu, c.budget.path_loss_db, c.budget.filter_transmissivity,
      c.budget.quantum_efficiency, c.budget.extinction_ratio, c.effective_background_hz(),
      c.budget.splitter_imbalance, c.clock.bit_period_ps, c.clock.pulse_spacing_bits,
      c.clock.pulse_width_ps, c.clock.phase_offset_ps, c.jitter.core_sigma_ps,
      c.jitter.tail_fraction, c.jitter.tail_decay_ps, c.jitter.offset_ps, c.jitter.dead_time_ps,
      c.capacity.service_rate_hz, c.capacity.queue_depth, c.capacity.enabled ? "true" : "false",
      c.protocol == ProtocolKind::B92 ? "b92" : "bb84", c.duration_s,
      static_cast<unsigned long long>(c.seed), c.daylight ? "true" : "false",
      c.force_single_photon ? "true" : "false", c.frame_done_interval);
  std::string out(buf);
  if (!c.entropy_file.empty()) out += "entropy_file = " + c.entropy_file + "\n";
  return out;
}

int64_t SimConfig::frame_count() const {
  const auto slots = int64_t(duration_s * clock.pulse_rate_hz());
  return std::max<int64_t>(1, slots / kFrameBits);
}

double SimConfig::effective_background_hz() const {
  if (background_overridden) return budget.background_rate_hz;
  return daylight ? kDaylightBackgroundHz : kNightBackgroundHz;
}

void SimConfig::validate() const {
  budget.validate();
  clock.validate();
  jitter.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("SimConfig: duration_s must be > 0");
  if (frame_done_interval < 1)
    throw std::invalid_argument("SimConfig: frame_done_interval must be >= 1");
  if (frame_done_interval > int(kMaxFrameDoneCount))
    throw std::invalid_argument("SimConfig: frame_done_interval exceeds wire message capacity");
  if (capacity.queue_depth < 0)
    throw std::invalid_argument("SimConfig: queue_depth must be >= 0");
}

}  // namespace qkdlink
