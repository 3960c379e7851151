#pragma once

// JSON run configuration. Every field is optional and falls back to the
// defaults of the corresponding struct; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "radaralloc/common.hpp"
#include "radaralloc/env.hpp"
#include "radaralloc/rl.hpp"

namespace radaralloc::config {

using nlohmann::json;

enum class Policy { rl, random, myopic };
enum class SweepAxis { subbands, rho, cars };

inline std::string to_string(Policy p) {
  switch (p) {
    case Policy::rl: return "rl";
    case Policy::random: return "random";
    case Policy::myopic: return "myopic";
  }
  return "?";
}

inline Policy parse_policy(const std::string& s) {
  if (s == "rl") return Policy::rl;
  if (s == "random") return Policy::random;
  if (s == "myopic") return Policy::myopic;
  throw ConfigError("unknown policy '" + s + "' (expected rl, random or myopic)");
}

inline env::Fidelity parse_fidelity(const std::string& s) {
  if (s == "analytic") return env::Fidelity::analytic;
  if (s == "signal") return env::Fidelity::signal;
  throw ConfigError("unknown fidelity '" + s + "' (expected analytic or signal)");
}

inline std::string to_string(env::Fidelity f) { return f == env::Fidelity::analytic ? "analytic" : "signal"; }

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "subbands") return SweepAxis::subbands;
  if (s == "rho") return SweepAxis::rho;
  if (s == "cars") return SweepAxis::cars;
  throw ConfigError("unknown sweep axis '" + s + "' (expected subbands, rho or cars)");
}

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::subbands: return "subbands";
    case SweepAxis::rho: return "rho";
    case SweepAxis::cars: return "cars";
  }
  return "?";
}

struct SweepConfig {
  SweepAxis axis = SweepAxis::subbands;
  std::vector<double> values{1, 2, 3, 4, 5};
  double train_rho = 0.02;  // networks for the rho axis are trained here
  int workers = 1;
};

struct RunConfig {
  env::EnvConfig env;
  rl::AgentConfig agent;
  Policy policy = Policy::rl;
  int n_train_episodes = 2000;
  int n_eval_episodes = 1000;
  int eval_episode_length = 100;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool timing = false;     // fill wall_ms (breaks byte-identical reruns)
  bool write_trace = false;
  bool exclude_current_on_switch = false;
  double smoothing_window = 100;
  SweepConfig sweep;

  void validate() const {
    env.validate();
    agent.validate();
    if (n_train_episodes < 0 || n_eval_episodes < 0) throw ConfigError("episode counts must be >= 0");
    if (eval_episode_length < 1) throw ConfigError("eval_episode_length must be >= 1");
    if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
    if (sweep.values.empty()) throw ConfigError("sweep.values must not be empty");
    if (sweep.workers < 1) throw ConfigError("sweep.workers must be >= 1");
    if (sweep.train_rho < 0) throw ConfigError("sweep.train_rho must be >= 0");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

/// Value stored in a unit-converted form (dB, dBm, degrees, microseconds).
template <class F>
void read_conv(const json& j, const char* key, double& out, const std::string& where, F from_user) {
  if (!j.contains(key)) return;
  double v = 0;
  read(j, key, v, where);
  out = from_user(v);
}

inline double watt_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

}  // namespace detail

inline void from_json_radar(const json& j, signal::RadarParams& r) {
  const std::string w = "radar";
  detail::check_keys(j, w, {"bandwidth_hz", "chirp_interval_us", "frame_duration_ms", "period_ms", "base_freq_hz",
                            "subbands", "tx_power_lrr_dbm", "tx_power_srr_dbm", "antenna_gain_db",
                            "effective_area_mm2", "decay", "lane_gap_m", "noise_power_w", "eta_threshold",
                            "discard_count", "fft_size", "sample_rate_hz", "beamwidth_deg", "window",
                            "detection_factor"});
  detail::read(j, "bandwidth_hz", r.bandwidth, w);
  detail::read_conv(j, "chirp_interval_us", r.chirp_interval, w, [](double v) { return v * 1e-6; });
  detail::read_conv(j, "frame_duration_ms", r.frame_duration, w, [](double v) { return v * 1e-3; });
  detail::read_conv(j, "period_ms", r.period, w, [](double v) { return v * 1e-3; });
  detail::read(j, "base_freq_hz", r.base_freq, w);
  detail::read(j, "subbands", r.subband_count, w);
  detail::read_conv(j, "tx_power_lrr_dbm", r.tx_power_lrr, w, dbm_to_watt);
  detail::read_conv(j, "tx_power_srr_dbm", r.tx_power_srr, w, dbm_to_watt);
  detail::read_conv(j, "antenna_gain_db", r.antenna_gain, w, db_to_linear);
  detail::read_conv(j, "effective_area_mm2", r.effective_area, w, [](double v) { return v * 1e-6; });
  detail::read(j, "decay", r.decay, w);
  detail::read(j, "lane_gap_m", r.lane_gap, w);
  detail::read(j, "noise_power_w", r.noise_power, w);
  detail::read(j, "eta_threshold", r.eta_threshold, w);
  detail::read(j, "discard_count", r.discard_count, w);
  detail::read(j, "fft_size", r.fft_size, w);
  detail::read(j, "sample_rate_hz", r.sample_rate, w);
  detail::read_conv(j, "beamwidth_deg", r.beamwidth, w, deg_to_rad);
  detail::read(j, "detection_factor", r.detection_factor, w);
  if (j.contains("window")) {
    std::string win;
    detail::read(j, "window", win, w);
    if (win == "hann") r.window = signal::Window::hann;
    else if (win == "rectangular") r.window = signal::Window::rectangular;
    else throw ConfigError("radar.window: expected hann or rectangular");
  }
}

inline json to_json_radar(const signal::RadarParams& r) {
  return {{"bandwidth_hz", r.bandwidth},
          {"chirp_interval_us", r.chirp_interval * 1e6},
          {"frame_duration_ms", r.frame_duration * 1e3},
          {"period_ms", r.period * 1e3},
          {"base_freq_hz", r.base_freq},
          {"subbands", r.subband_count},
          {"tx_power_lrr_dbm", detail::watt_to_dbm(r.tx_power_lrr)},
          {"tx_power_srr_dbm", detail::watt_to_dbm(r.tx_power_srr)},
          {"antenna_gain_db", detail::linear_to_db(r.antenna_gain)},
          {"effective_area_mm2", r.effective_area * 1e6},
          {"decay", r.decay},
          {"lane_gap_m", r.lane_gap},
          {"noise_power_w", r.noise_power},
          {"eta_threshold", r.eta_threshold},
          {"discard_count", r.discard_count},
          {"fft_size", r.fft_size},
          {"sample_rate_hz", r.sample_rate},
          {"beamwidth_deg", r.beamwidth * 180.0 / kPi},
          {"window", r.window == signal::Window::hann ? "hann" : "rectangular"},
          {"detection_factor", r.detection_factor}};
}

inline void from_json_traffic(const json& j, traffic::TrafficConfig& t) {
  const std::string w = "traffic";
  detail::check_keys(j, w, {"cars", "rho", "d_min_m", "d_max_m", "v1", "v2", "v_max_1", "v_max_2", "delta_v", "t_v_s",
                            "p_sd", "model"});
  detail::read(j, "cars", t.n_cars, w);
  detail::read(j, "rho", t.rho, w);
  detail::read(j, "d_min_m", t.d_min, w);
  detail::read(j, "d_max_m", t.d_max, w);
  detail::read(j, "v1", t.v1, w);
  detail::read_conv(j, "v2", t.v2, w, [](double v) { return std::abs(v); });
  detail::read(j, "v_max_1", t.v_max_1, w);
  detail::read_conv(j, "v_max_2", t.v_max_2, w, [](double v) { return std::abs(v); });
  detail::read(j, "delta_v", t.delta_v, w);
  detail::read(j, "t_v_s", t.t_v, w);
  detail::read(j, "p_sd", t.p_sd, w);
  if (j.contains("model")) {
    std::string m;
    detail::read(j, "model", m, w);
    if (m == "uniform") t.model = traffic::MotionModel::uniform;
    else if (m == "automaton") t.model = traffic::MotionModel::automaton;
    else throw ConfigError("traffic.model: expected uniform or automaton");
  }
}

inline json to_json_traffic(const traffic::TrafficConfig& t) {
  return {{"cars", t.n_cars},       {"rho", t.rho},         {"d_min_m", t.d_min},
          {"d_max_m", t.d_max},     {"v1", t.v1},           {"v2", -t.v2},
          {"v_max_1", t.v_max_1},   {"v_max_2", -t.v_max_2}, {"delta_v", t.delta_v},
          {"t_v_s", t.t_v},         {"p_sd", t.p_sd},
          {"model", t.model == traffic::MotionModel::uniform ? "uniform" : "automaton"}};
}

inline void from_json_env(const json& j, env::EnvConfig& e) {
  const std::string w = "env";
  detail::check_keys(j, w, {"fidelity", "measurement_std_m", "stale_probability", "eta_noise_std", "chirp_min_us",
                            "chirp_max_us", "echo_snr"});
  if (j.contains("fidelity")) {
    std::string f;
    detail::read(j, "fidelity", f, w);
    e.fidelity = parse_fidelity(f);
  }
  detail::read(j, "measurement_std_m", e.measurement.base_std, w);
  detail::read(j, "stale_probability", e.measurement.stale_probability, w);
  detail::read(j, "eta_noise_std", e.eta_noise_std, w);
  detail::read_conv(j, "chirp_min_us", e.chirp_min, w, [](double v) { return v * 1e-6; });
  detail::read_conv(j, "chirp_max_us", e.chirp_max, w, [](double v) { return v * 1e-6; });
  detail::read(j, "echo_snr", e.echo_snr, w);
}

inline json to_json_env(const env::EnvConfig& e) {
  return {{"fidelity", to_string(e.fidelity)},
          {"measurement_std_m", e.measurement.base_std},
          {"stale_probability", e.measurement.stale_probability},
          {"eta_noise_std", e.eta_noise_std},
          {"chirp_min_us", e.chirp_min * 1e6},
          {"chirp_max_us", e.chirp_max * 1e6},
          {"echo_snr", e.echo_snr}};
}

inline void from_json_agent(const json& j, rl::AgentConfig& a) {
  const std::string w = "agent";
  detail::check_keys(j, w, {"gamma", "epsilon", "batch_K", "batch_P", "target_sync_C", "learning_rate", "grad_clip",
                            "warmup_episodes", "memory_episodes", "min_episode_length", "max_episode_length",
                            "update_every", "fcl", "lstm"});
  detail::read(j, "gamma", a.gamma, w);
  detail::read(j, "epsilon", a.epsilon, w);
  detail::read(j, "batch_K", a.batch_K, w);
  detail::read(j, "batch_P", a.batch_P, w);
  detail::read(j, "target_sync_C", a.target_sync_C, w);
  detail::read(j, "learning_rate", a.learning_rate, w);
  detail::read(j, "grad_clip", a.grad_clip, w);
  detail::read(j, "warmup_episodes", a.warmup_episodes, w);
  detail::read(j, "memory_episodes", a.memory_episodes, w);
  detail::read(j, "min_episode_length", a.min_episode_length, w);
  detail::read(j, "max_episode_length", a.max_episode_length, w);
  detail::read(j, "update_every", a.update_every, w);
  detail::read(j, "fcl", a.shape.fcl, w);
  detail::read(j, "lstm", a.shape.lstm, w);
}

inline json to_json_agent(const rl::AgentConfig& a) {
  return {{"gamma", a.gamma},
          {"epsilon", a.epsilon},
          {"batch_K", a.batch_K},
          {"batch_P", a.batch_P},
          {"target_sync_C", a.target_sync_C},
          {"learning_rate", a.learning_rate},
          {"grad_clip", a.grad_clip},
          {"warmup_episodes", a.warmup_episodes},
          {"memory_episodes", a.memory_episodes},
          {"min_episode_length", a.min_episode_length},
          {"max_episode_length", a.max_episode_length},
          {"update_every", a.update_every},
          {"fcl", a.shape.fcl},
          {"lstm", a.shape.lstm}};
}

inline RunConfig from_json(const json& j) {
  RunConfig c;
  detail::check_keys(j, "config", {"seed", "policy", "output_dir", "n_train_episodes", "n_eval_episodes",
                                   "eval_episode_length", "timing", "trace", "exclude_current_on_switch",
                                   "smoothing_window", "radar", "traffic", "env", "agent", "sweep"});
  const std::string w = "config";
  detail::read(j, "seed", c.seed, w);
  if (j.contains("policy")) {
    std::string p;
    detail::read(j, "policy", p, w);
    c.policy = parse_policy(p);
  }
  detail::read(j, "output_dir", c.output_dir, w);
  detail::read(j, "n_train_episodes", c.n_train_episodes, w);
  detail::read(j, "n_eval_episodes", c.n_eval_episodes, w);
  detail::read(j, "eval_episode_length", c.eval_episode_length, w);
  detail::read(j, "timing", c.timing, w);
  detail::read(j, "trace", c.write_trace, w);
  detail::read(j, "exclude_current_on_switch", c.exclude_current_on_switch, w);
  detail::read(j, "smoothing_window", c.smoothing_window, w);
  if (j.contains("radar")) from_json_radar(j.at("radar"), c.env.radar);
  if (j.contains("traffic")) from_json_traffic(j.at("traffic"), c.env.traffic);
  if (j.contains("env")) from_json_env(j.at("env"), c.env);
  if (j.contains("agent")) from_json_agent(j.at("agent"), c.agent);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::check_keys(s, "sweep", {"axis", "values", "train_rho", "workers"});
    if (s.contains("axis")) {
      std::string a;
      detail::read(s, "axis", a, "sweep");
      c.sweep.axis = parse_axis(a);
    }
    detail::read(s, "values", c.sweep.values, "sweep");
    detail::read(s, "train_rho", c.sweep.train_rho, "sweep");
    detail::read(s, "workers", c.sweep.workers, "sweep");
  }
  c.validate();
  return c;
}

namespace detail {

/// Unit conversions (dBm, us, degrees) are not exact inverses; rounding to 12
/// significant digits makes a saved config reload to the same values and hash.
inline void round_floats(json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v != 0 && std::isfinite(v)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", v);
      j = std::strtod(buf, nullptr);
    }
  } else if (j.is_structured()) {
    for (auto& x : j) round_floats(x);
  }
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["policy"] = to_string(c.policy);
  j["output_dir"] = c.output_dir;
  j["n_train_episodes"] = c.n_train_episodes;
  j["n_eval_episodes"] = c.n_eval_episodes;
  j["eval_episode_length"] = c.eval_episode_length;
  j["timing"] = c.timing;
  j["trace"] = c.write_trace;
  j["exclude_current_on_switch"] = c.exclude_current_on_switch;
  j["smoothing_window"] = c.smoothing_window;
  j["radar"] = to_json_radar(c.env.radar);
  j["traffic"] = to_json_traffic(c.env.traffic);
  j["env"] = to_json_env(c.env);
  j["agent"] = to_json_agent(c.agent);
  j["sweep"] = {{"axis", to_string(c.sweep.axis)},
                {"values", c.sweep.values},
                {"train_rho", c.sweep.train_rho},
                {"workers", c.sweep.workers}};
  detail::round_floats(j);
  return j;
}

/// Reads and validates a config file. Missing or malformed files are config
/// errors that name the path.
inline RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

/// Stable hash of the effective configuration (crc32 of the canonical dump,
/// output_dir excluded), as 8 hex digits.
inline std::string hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  const std::string s = j.dump();
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x",
                static_cast<unsigned>(crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()))));
  return buf;
}

}  // namespace radaralloc::config
