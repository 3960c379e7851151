#pragma once

// Two-lane toroidal road: truncated-exponential initial spacing, constant
// velocity motion and a probabilistic cellular automaton.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "radaralloc/common.hpp"

namespace radaralloc::traffic {

enum class MotionModel { uniform, automaton };

struct TrafficConfig {
  int n_cars = 6;
  double rho = 0.02;  // cars per metre
  double d_min = 10.0;
  double d_max = 200.0;
  double v1 = 30.0;   // lane 1 speed, travelling towards +x
  double v2 = 25.0;   // lane 2 speed magnitude, travelling towards -x
  double v_max_1 = 30.0;
  double v_max_2 = 25.0;
  double delta_v = 5.0;
  double t_v = 0.5;
  double p_sd = 0.1;
  MotionModel model = MotionModel::uniform;

  double v_max(int lane) const { return lane == 1 ? v_max_1 : v_max_2; }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("traffic: ") + what);
    };
    require(n_cars >= 2, "n_cars must be >= 2");
    require(rho >= 0, "rho must be non-negative");
    require(d_min > 0 && d_min < d_max, "need 0 < d_min < d_max");
    require(v1 >= 0 && v2 >= 0, "lane speeds are magnitudes and must be >= 0");
    require(v1 <= v_max_1 && v2 <= v_max_2, "initial speeds must not exceed v_max");
    require(delta_v > 0 && t_v > 0, "delta_v and t_v must be positive");
    require(p_sd >= 0 && p_sd <= 1, "p_sd must lie in [0, 1]");
  }
};

struct CarState {
  int id = 0;
  int lane = 1;
  double position = 0;
  double speed = 0;
  int direction = 1;
};

struct ScenarioState {
  std::vector<CarState> cars;
  double road_length = 0;
  double time = 0;
  double next_speed_update = 0;
  long lane_order_violations = 0;

  const CarState& car(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= cars.size() || cars[static_cast<std::size_t>(id)].id != id)
      throw std::out_of_range("traffic: unknown car id " + std::to_string(id));
    return cars[static_cast<std::size_t>(id)];
  }
};

/// Inverse-CDF draw from the density proportional to exp(-rho*l) on [d_min, d_max].
inline double sample_spacing(double rho, double d_min, double d_max, Rng& rng) {
  if (!(d_min < d_max) || d_min < 0) throw std::invalid_argument("sample_spacing: need 0 <= d_min < d_max");
  if (rho < 0) throw std::invalid_argument("sample_spacing: rho must be non-negative");
  const double u = uniform01(rng);
  const double span = d_max - d_min;
  if (rho * span < 1e-12) return d_min + u * span;
  const double l = d_min - std::log1p(u * std::expm1(-rho * span)) / rho;
  return std::clamp(l, d_min, d_max);
}

/// Analytic CDF of sample_spacing.
inline double spacing_cdf(double l, double rho, double d_min, double d_max) {
  if (l <= d_min) return 0.0;
  if (l >= d_max) return 1.0;
  const double span = d_max - d_min;
  if (rho * span < 1e-12) return (l - d_min) / span;
  return std::expm1(-rho * (l - d_min)) / std::expm1(-rho * span);
}

inline double spacing_mean(double rho, double d_min, double d_max) {
  const double span = d_max - d_min;
  if (rho * span < 1e-12) return 0.5 * (d_min + d_max);
  const double e = std::exp(-rho * span);
  return d_min + 1.0 / rho - span * e / (1.0 - e);
}

/// Lane 1 holds cars 0..ceil(N/2)-1, lane 2 the rest. Each lane is laid out
/// front to back with i.i.d. gaps; the road is the longer lane plus d_max.
inline ScenarioState init_scenario(const TrafficConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n1 = (cfg.n_cars + 1) / 2;
  const int n2 = cfg.n_cars - n1;
  ScenarioState s;
  std::vector<double> pos1{0.0}, pos2;
  for (int i = 1; i < n1; ++i) pos1.push_back(pos1.back() + sample_spacing(cfg.rho, cfg.d_min, cfg.d_max, rng));
  const double offset = uniform01(rng) * cfg.d_max;
  if (n2 > 0) pos2.push_back(offset);
  for (int i = 1; i < n2; ++i) pos2.push_back(pos2.back() - sample_spacing(cfg.rho, cfg.d_min, cfg.d_max, rng));
  const double extent1 = pos1.back() - pos1.front();
  const double extent2 = pos2.empty() ? 0.0 : pos2.front() - pos2.back();
  s.road_length = std::max(extent1, extent2) + cfg.d_max;

  int id = 0;
  for (double p : pos1) s.cars.push_back({id++, 1, wrap(p, s.road_length), cfg.v1, +1});
  for (double p : pos2) s.cars.push_back({id++, 2, wrap(p, s.road_length), cfg.v2, -1});
  s.next_speed_update = cfg.t_v;
  return s;
}

struct Neighbor {
  int id = -1;
  double position = 0;
  double gap = 0;  // distance ahead along the querying car's direction
};

struct Neighbors {
  std::optional<Neighbor> same_lane;
  std::optional<Neighbor> other_lane;
};

/// Forward distance from `from` to `to` along `direction`, in (0, road]; a
/// co-located car counts as a full lap ahead.
inline double forward_gap(double from, double to, int direction, double road) {
  const double g = wrap(direction * (to - from), road);
  return g > 0 ? g : road;
}

inline Neighbors front_neighbors(const ScenarioState& s, int car_id) {
  const auto& me = s.car(car_id);
  Neighbors out;
  for (const auto& c : s.cars) {
    if (c.id == me.id) continue;
    const double gap = forward_gap(me.position, c.position, me.direction, s.road_length);
    auto& slot = c.lane == me.lane ? out.same_lane : out.other_lane;
    if (!slot || gap < slot->gap) slot = Neighbor{c.id, c.position, gap};
  }
  return out;
}

namespace detail {

/// Move every car by direction*speed*dt and count same-lane overtakes.
inline void advance(ScenarioState& s, double dt) {
  if (dt <= 0) return;
  std::vector<std::optional<Neighbor>> front(s.cars.size());
  for (const auto& c : s.cars) front[static_cast<std::size_t>(c.id)] = front_neighbors(s, c.id).same_lane;
  for (const auto& c : s.cars) {
    const auto& f = front[static_cast<std::size_t>(c.id)];
    if (!f) continue;
    const double closing = (c.speed - s.cars[static_cast<std::size_t>(f->id)].speed) * dt;
    if (closing >= f->gap) ++s.lane_order_violations;
  }
  for (auto& c : s.cars) c.position = wrap(c.position + c.direction * c.speed * dt, s.road_length);
  s.time += dt;
}

inline void update_speeds(ScenarioState& s, const TrafficConfig& cfg, Rng& rng) {
  std::vector<double> gaps(s.cars.size(), std::numeric_limits<double>::infinity());
  for (const auto& c : s.cars)
    if (auto f = front_neighbors(s, c.id).same_lane) gaps[static_cast<std::size_t>(c.id)] = f->gap;
  const double eps = 1e-9 * cfg.delta_v;
  for (auto& c : s.cars) {
    const double vmax = cfg.v_max(c.lane);
    double v = c.speed;
    if (v < vmax - eps) v += cfg.delta_v;
    if (gaps[static_cast<std::size_t>(c.id)] <= cfg.d_min) v -= cfg.delta_v;
    // One Bernoulli draw per car per update keeps the stream aligned.
    const bool slow = uniform01(rng) < cfg.p_sd;
    if (slow && v >= cfg.delta_v - eps) v -= cfg.delta_v;
    c.speed = std::clamp(v, 0.0, vmax);
  }
}

}  // namespace detail

inline ScenarioState step_uniform(ScenarioState s, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("step_uniform: dt must be positive");
  detail::advance(s, dt);
  return s;
}

/// Positions advance continuously; speeds change at every multiple of t_v,
/// with all cars updated synchronously from the same snapshot.
inline ScenarioState step_automaton(ScenarioState s, const TrafficConfig& cfg, double dt, Rng& rng) {
  if (!(dt > 0)) throw std::invalid_argument("step_automaton: dt must be positive");
  const double end = s.time + dt;
  const double eps = 1e-9 * cfg.t_v;
  if (s.next_speed_update <= 0) s.next_speed_update = cfg.t_v;
  while (s.next_speed_update <= end + eps) {
    detail::advance(s, s.next_speed_update - s.time);
    s.time = s.next_speed_update;
    detail::update_speeds(s, cfg, rng);
    s.next_speed_update += cfg.t_v;
  }
  detail::advance(s, end - s.time);
  s.time = end;
  return s;
}

inline ScenarioState step(ScenarioState s, const TrafficConfig& cfg, double dt, Rng& rng) {
  return cfg.model == MotionModel::uniform ? step_uniform(std::move(s), dt)
                                           : step_automaton(std::move(s), cfg, dt, rng);
}

inline void write_snapshot_header(std::ostream& os) { os << "time,car_id,lane,position,speed\n"; }

inline void write_snapshot(std::ostream& os, const ScenarioState& s) {
  for (const auto& c : s.cars)
    os << s.time << ',' << c.id << ',' << c.lane << ',' << c.position << ',' << c.speed << '\n';
}

}  // namespace radaralloc::traffic
