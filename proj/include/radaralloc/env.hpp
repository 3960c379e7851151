#pragma once

// Multi-radar subband environment. Every car carries a front long-range radar
// (the victim being scored) and a rear short-range radar; both use the car's
// chosen subband each period.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "radaralloc/common.hpp"
#include "radaralloc/signal.hpp"
#include "radaralloc/traffic.hpp"

namespace radaralloc::env {

enum class Fidelity { analytic, signal };

struct MeasurementConfig {
  double base_std = 0.5;           // metres at eta = 1
  double stale_probability = 0.5;  // chance a measurement is lost when eta >= eta0
};

struct EnvConfig {
  signal::RadarParams radar;
  traffic::TrafficConfig traffic;
  Fidelity fidelity = Fidelity::analytic;
  MeasurementConfig measurement;
  std::uint64_t seed = 1;
  double eta_noise_std = 0.03;  // multiplicative estimator spread in analytic mode
  double chirp_min = 10e-6;     // per-radar chirp intervals, signal mode
  double chirp_max = 100e-6;
  double echo_snr = 4.0;        // front-car echo in signal mode

  void validate() const {
    radar.validate();
    traffic.validate();
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("env: ") + what);
    };
    require(measurement.base_std >= 0, "measurement.base_std must be >= 0");
    require(measurement.stale_probability >= 0 && measurement.stale_probability <= 1,
            "measurement.stale_probability must lie in [0, 1]");
    require(eta_noise_std >= 0, "eta_noise_std must be >= 0");
    require(chirp_min > 0 && chirp_min < chirp_max && chirp_max <= radar.frame_duration,
            "need 0 < chirp_min < chirp_max <= frame_duration");
    require(echo_snr >= 0, "echo_snr must be >= 0");
  }
};

inline constexpr int kObservationSize = 7;
using Features = std::array<float, kObservationSize>;

/// What radar i knows after period t-1. Gaps are forward distances to the
/// nearest car ahead; -1 marks "never measured".
struct Observation {
  int last_subband = 0;
  int last_reward = 0;
  double last_eta = 1.0;
  double own_position = 0;
  double front_same_gap = -1;
  double front_diff_gap = -1;
  int fresh_measurements = 0;  // 0..2 neighbours measured this period
};

/// Network input: [u/(M-1), r, clip(log10 eta, 0, 3), p/road, gapS/d_max,
/// gapD/d_max, fresh/2]. Missing gaps stay at -1.
inline Features encode(const Observation& o, int subband_count, double road_length, double d_max) {
  Features f{};
  f[0] = subband_count > 1 ? static_cast<float>(o.last_subband) / static_cast<float>(subband_count - 1) : 0.0f;
  f[1] = static_cast<float>(o.last_reward);
  f[2] = static_cast<float>(std::clamp(std::log10(std::max(o.last_eta, 1e-300)), 0.0, 3.0));
  f[3] = static_cast<float>(o.own_position / road_length);
  f[4] = o.front_same_gap < 0 ? -1.0f : static_cast<float>(o.front_same_gap / d_max);
  f[5] = o.front_diff_gap < 0 ? -1.0f : static_cast<float>(o.front_diff_gap / d_max);
  f[6] = 0.5f * static_cast<float>(o.fresh_measurements);
  return f;
}

struct RadarOutcome {
  int reward = 0;
  double eta = 1.0;
  double inr = 0.0;
};

struct StepResult {
  std::vector<RadarOutcome> outcomes;
  std::vector<Observation> observations;
};

/// Multiplicative estimator spread around INR + 1, truncated to positive.
inline double compute_eta_analytic(double total_interference, double noise_power, double spread, Rng& rng) {
  if (total_interference < 0 || !(noise_power > 0))
    throw std::invalid_argument("compute_eta_analytic: need P_I >= 0 and sigma^2 > 0");
  double factor = 1.0;
  if (spread > 0) {
    std::normal_distribution<double> gauss(1.0, spread);
    do factor = gauss(rng); while (factor <= 0);
  }
  return (total_interference / noise_power + 1.0) * factor;
}

/// Co-channel aggressor as seen by a victim long-range radar.
struct Aggressor {
  int car_id = -1;
  bool same_lane = false;  // rear short-range radar of the car ahead
  double gap = 0;          // longitudinal forward distance
  double power = 0;        // received at the victim, W
};

/// Long-range radars facing the victim from the other lane within half a
/// road length, plus the short-range radar of the car directly ahead.
inline std::vector<Aggressor> aggressors(const signal::RadarParams& radar,
                                         const traffic::ScenarioState& s, int victim,
                                         std::span<const int> actions) {
  std::vector<Aggressor> out;
  const auto& me = s.car(victim);
  const int band = actions[static_cast<std::size_t>(victim)];
  const auto front = traffic::front_neighbors(s, victim);
  for (const auto& c : s.cars) {
    if (c.id == victim || actions[static_cast<std::size_t>(c.id)] != band) continue;
    const double gap = traffic::forward_gap(me.position, c.position, me.direction, s.road_length);
    if (c.lane != me.lane) {
      if (gap <= 0.5 * s.road_length)
        out.push_back({c.id, false, gap, signal::interference_power_cross_lane(radar, gap)});
    } else if (front.same_lane && front.same_lane->id == c.id) {
      out.push_back({c.id, true, gap, signal::interference_power_same_lane(radar, gap)});
    }
  }
  return out;
}

/// Random streams: traffic motion, eta estimation, measurement errors and
/// signal synthesis are independent so that policies under comparison face
/// the same traffic regardless of their actions.
enum Stream : std::uint64_t {
  kTrafficStream = 1,
  kEtaStream = 2,
  kMeasureStream = 3,
  kSignalStream = 4,
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  const traffic::ScenarioState& scenario() const { return state_; }
  const std::vector<Observation>& observations() const { return obs_; }
  int car_count() const { return static_cast<int>(state_.cars.size()); }
  int subband_count() const { return cfg_.radar.subband_count; }

  /// Fresh scenario for episode `episode_seed`; all streams derive from it.
  const std::vector<Observation>& reset(std::uint64_t episode_seed) {
    traffic_rng_ = make_rng(episode_seed, kTrafficStream);
    eta_rng_ = make_rng(episode_seed, kEtaStream);
    measure_rng_ = make_rng(episode_seed, kMeasureStream);
    signal_rng_ = make_rng(episode_seed, kSignalStream);
    state_ = traffic::init_scenario(cfg_.traffic, traffic_rng_);

    const auto n = state_.cars.size();
    lrr_chirp_.assign(n, cfg_.radar.chirp_interval);
    srr_chirp_.assign(n, cfg_.radar.chirp_interval);
    if (cfg_.fidelity == Fidelity::signal) {
      for (std::size_t i = 0; i < n; ++i) {
        lrr_chirp_[i] = draw_chirp_interval();
        srr_chirp_[i] = draw_chirp_interval();
      }
    }

    obs_.assign(n, Observation{});
    for (std::size_t i = 0; i < n; ++i) {
      auto& o = obs_[i];
      o.own_position = state_.cars[i].position;
      measure(static_cast<int>(i), 1.0, o);
    }
    return obs_;
  }

  StepResult step(std::span<const int> actions) {
    const auto n = state_.cars.size();
    if (actions.size() != n)
      throw std::invalid_argument("env step: expected " + std::to_string(n) + " actions, got " +
                                  std::to_string(actions.size()));
    for (int a : actions)
      if (a < 0 || a >= cfg_.radar.subband_count) throw std::invalid_argument("env step: action out of range");

    state_ = traffic::step(std::move(state_), cfg_.traffic, cfg_.radar.period, traffic_rng_);

    StepResult res;
    res.outcomes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto agg = aggressors(cfg_.radar, state_, static_cast<int>(i), actions);
      double total = 0;
      for (const auto& a : agg) total += a.power;
      auto& out = res.outcomes[i];
      out.inr = total / cfg_.radar.noise_power;
      out.eta = cfg_.fidelity == Fidelity::analytic
                    ? compute_eta_analytic(total, cfg_.radar.noise_power, cfg_.eta_noise_std, eta_rng_)
                    : compute_eta_signal(static_cast<int>(i), actions[i], agg);
      out.reward = out.eta < cfg_.radar.eta_threshold ? 1 : 0;
    }

    for (std::size_t i = 0; i < n; ++i) {
      auto& o = obs_[i];
      o.last_subband = actions[i];
      o.last_reward = res.outcomes[i].reward;
      o.last_eta = res.outcomes[i].eta;
      o.own_position = state_.cars[i].position;
      measure(static_cast<int>(i), res.outcomes[i].eta, o);
    }
    res.observations = obs_;
    return res;
  }

  /// Sample-level eta for radar `victim` against the given aggressors.
  double compute_eta_signal(int victim, int subband, std::span<const Aggressor> agg) {
    auto p = cfg_.radar;
    p.chirp_interval = lrr_chirp_[static_cast<std::size_t>(victim)];
    const auto tx = signal::synth_chirp_frame(p, subband);
    const auto& me = state_.car(victim);

    std::vector<signal::EchoSpec> echoes;
    if (auto f = traffic::front_neighbors(state_, victim).same_lane) {
      const double closing = me.speed - state_.car(f->id).speed;
      echoes.push_back({f->gap, closing, cfg_.echo_snr * p.noise_power});
    }
    std::vector<signal::InterfererSpec> hs;
    for (const auto& a : agg) {
      const auto& other = state_.car(a.car_id);
      const auto idx = static_cast<std::size_t>(a.car_id);
      const double tc = a.same_lane ? srr_chirp_[idx] : lrr_chirp_[idx];
      const double dist = a.same_lane ? a.gap : std::hypot(p.lane_gap, a.gap);
      const double closing = a.same_lane ? me.speed - other.speed : me.speed + other.speed;
      hs.push_back({dist, closing, a.power, tc, uniform01(signal_rng_) * 2.0 * tc,
                    2.0 * kPi * uniform01(signal_rng_)});
    }
    return signal::measure_eta(p, tx, echoes, hs, signal_rng_);
  }

  std::span<const double> lrr_chirp_intervals() const { return lrr_chirp_; }

 private:
  double draw_chirp_interval() {
    // Quantized to 0.1 us so the interference-free calibration cache stays small.
    const double tc = cfg_.chirp_min + uniform01(signal_rng_) * (cfg_.chirp_max - cfg_.chirp_min);
    return std::round(tc * 1e7) / 1e7;
  }

  /// Noisy forward gaps; error grows with sqrt(eta) and the reading is lost
  /// (previous value held) with stale_probability once eta >= eta0. The same
  /// number of draws is consumed on every call.
  void measure(int id, double eta, Observation& o) {
    const auto nb = traffic::front_neighbors(state_, id);
    const double sd = cfg_.measurement.base_std * std::sqrt(std::max(eta, 0.0));
    const bool failing = eta >= cfg_.radar.eta_threshold;
    o.fresh_measurements = 0;
    auto update = [&](const std::optional<traffic::Neighbor>& n, double& slot) {
      const double noise = normal(measure_rng_, 0.0, 1.0) * sd;
      const bool lost = uniform01(measure_rng_) < cfg_.measurement.stale_probability;
      if (!n) {
        slot = -1;
        return;
      }
      if (failing && lost) return;
      slot = std::max(0.0, n->gap + noise);
      ++o.fresh_measurements;
    };
    update(nb.same_lane, o.front_same_gap);
    update(nb.other_lane, o.front_diff_gap);
  }

  EnvConfig cfg_;
  traffic::ScenarioState state_;
  std::vector<Observation> obs_;
  std::vector<double> lrr_chirp_, srr_chirp_;
  Rng traffic_rng_, eta_rng_, measure_rng_, signal_rng_;
};

}  // namespace radaralloc::env
