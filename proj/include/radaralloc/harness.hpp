#pragma once

// Experiment orchestration: success-rate metric, evaluation of controllers,
// train-then-test runs, sweeps, the spectrum demo and the gradient check.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "radaralloc/config.hpp"
#include "radaralloc/env.hpp"
#include "radaralloc/io.hpp"
#include "radaralloc/nn.hpp"
#include "radaralloc/policies.hpp"
#include "radaralloc/rl.hpp"
#include "radaralloc/signal.hpp"

namespace radaralloc::harness {

namespace fs = std::filesystem;
using config::Policy;
using config::RunConfig;

/// Mean over radars of each radar's fraction of periods with eta < eta0.
inline double success_rate(const std::vector<std::vector<double>>& eta_trace, double eta0) {
  if (eta_trace.empty()) throw std::invalid_argument("success_rate: empty trace");
  double total = 0;
  for (const auto& radar : eta_trace) {
    if (radar.empty()) throw std::invalid_argument("success_rate: radar with no steps");
    const auto ok = std::count_if(radar.begin(), radar.end(), [eta0](double e) { return e < eta0; });
    total += static_cast<double>(ok) / static_cast<double>(radar.size());
  }
  return total / static_cast<double>(eta_trace.size());
}

/// Trailing moving average; the first window-1 entries average what exists.
inline std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: window must be >= 1");
  std::vector<double> out(v.size());
  double acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= window) acc -= v[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

struct MetricsRow {
  long episode = 0;  // -1 marks an aggregate over all evaluated episodes
  std::string policy;
  int n_cars = 0;
  int subbands = 0;
  double rho = 0;
  double success_rate = 0;
  double mean_eta = 0;
  double wall_ms = 0;
};

inline std::string csv_preamble(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

inline std::string metrics_csv(std::span<const MetricsRow> rows, const std::string& hash, std::uint64_t seed,
                               bool timing) {
  std::string out = csv_preamble(hash, seed);
  out += "episode,policy,N,M,rho,success_rate,mean_eta,wall_ms\n";
  for (const auto& r : rows)
    out += std::to_string(r.episode) + ',' + r.policy + ',' + std::to_string(r.n_cars) + ',' +
           std::to_string(r.subbands) + ',' + io::num(r.rho) + ',' + io::num(r.success_rate) + ',' +
           io::num(r.mean_eta) + ',' + (timing ? io::num(r.wall_ms) : std::string()) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Controllers backed by trained networks

/// Greedy (epsilon = 0) play with one network per car. `assignment[i]` picks
/// the network driving car i, which lets a network set trained for N cars
/// drive a smaller scenario.
class RlController final : public policies::Controller {
 public:
  RlController(std::vector<nn::QNetwork<float>> nets, std::vector<int> assignment = {})
      : nets_(std::move(nets)), assignment_(std::move(assignment)) {
    if (nets_.empty()) throw std::invalid_argument("rl controller: no networks");
  }

  std::string name() const override { return "rl"; }

  void begin_episode(const env::Environment& e, std::uint64_t) override {
    const auto n = static_cast<std::size_t>(e.car_count());
    if (assignment_.empty()) {
      if (nets_.size() != n)
        throw std::runtime_error("rl controller: " + std::to_string(nets_.size()) + " networks for " +
                                 std::to_string(n) + " cars and no assignment");
      assignment_.resize(n);
      for (std::size_t i = 0; i < n; ++i) assignment_[i] = static_cast<int>(i);
    }
    if (assignment_.size() != n) throw std::runtime_error("rl controller: assignment does not match car count");
    for (int a : assignment_) {
      if (a < 0 || static_cast<std::size_t>(a) >= nets_.size())
        throw std::runtime_error("rl controller: assignment refers to a missing network");
      if (nets_[static_cast<std::size_t>(a)].shape().output != e.subband_count())
        throw std::runtime_error("rl controller: network output width differs from the subband count");
    }
    states_.assign(n, nn::zero_state<float>(nets_.front().shape()));
  }

  void act(const env::Environment& e, std::span<int> actions) override {
    const auto& obs = e.observations();
    const double road = e.scenario().road_length;
    const double dmax = e.config().traffic.d_max;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const auto f = env::encode(obs[i], e.subband_count(), road, dmax);
      const nn::Mat<float> x = Eigen::Map<const Eigen::VectorXf>(f.data(), env::kObservationSize);
      const nn::Mat<float> q = nn::forward_batch<float>(nets_[static_cast<std::size_t>(assignment_[i])], x, states_[i]);
      Eigen::Index best = 0;
      for (Eigen::Index u = 1; u < q.rows(); ++u)
        if (q(u, 0) > q(best, 0)) best = u;
      actions[i] = static_cast<int>(best);
    }
  }

 private:
  std::vector<nn::QNetwork<float>> nets_;
  std::vector<int> assignment_;
  std::vector<nn::Mat<float>> states_;
};

/// Networks for lane-consistent reuse: trained cars of lane 1 are ids
/// 0..ceil(N/2)-1, lane 2 the rest. A smaller scenario takes the first cars of
/// each lane.
inline std::vector<int> lane_assignment(int trained_cars, int target_cars) {
  if (target_cars < 2 || target_cars > trained_cars)
    throw std::invalid_argument("lane_assignment: need 2 <= target <= trained cars");
  const int t1 = (trained_cars + 1) / 2;
  const int n1 = (target_cars + 1) / 2;
  const int n2 = target_cars - n1;
  if (n2 > trained_cars - t1) throw std::invalid_argument("lane_assignment: lane 2 has too few networks");
  std::vector<int> a;
  for (int i = 0; i < n1; ++i) a.push_back(i);
  for (int i = 0; i < n2; ++i) a.push_back(t1 + i);
  return a;
}

enum Stream : std::uint64_t { kEvalEpisodeStream = 31 };

struct EvalSummary {
  std::vector<MetricsRow> rows;  // one per episode
  double success_rate = 0;
  double mean_eta = 0;
};

/// Play `n_episodes` test episodes. Episode seeds depend only on `seed`, so
/// every controller evaluated with the same seed meets the same traffic.
inline EvalSummary evaluate(const env::EnvConfig& env_cfg, policies::Controller& ctl, int n_episodes,
                            int episode_length, std::uint64_t seed, long first_episode_index = 0,
                            std::string* trace = nullptr) {
  env::Environment environment(env_cfg);
  EvalSummary out;
  const int n = env_cfg.traffic.n_cars;
  std::vector<int> actions(static_cast<std::size_t>(n));
  double eta_total = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto episode_seed = derive_seed(seed, kEvalEpisodeStream, static_cast<std::uint64_t>(ep));
    environment.reset(episode_seed);
    ctl.begin_episode(environment, episode_seed);
    std::vector<std::vector<double>> etas(static_cast<std::size_t>(n));
    double eta_sum = 0;
    for (int t = 0; t < episode_length; ++t) {
      ctl.act(environment, actions);
      const auto r = environment.step(actions);
      for (int i = 0; i < n; ++i) {
        etas[static_cast<std::size_t>(i)].push_back(r.outcomes[static_cast<std::size_t>(i)].eta);
        eta_sum += r.outcomes[static_cast<std::size_t>(i)].eta;
      }
      if (trace) io::append_trace(*trace, ctl.name(), first_episode_index + ep, t, actions, r, environment.scenario());
    }
    MetricsRow row;
    row.episode = first_episode_index + ep;
    row.policy = ctl.name();
    row.n_cars = n;
    row.subbands = env_cfg.radar.subband_count;
    row.rho = env_cfg.traffic.rho;
    row.success_rate = success_rate(etas, env_cfg.radar.eta_threshold);
    row.mean_eta = eta_sum / (static_cast<double>(n) * episode_length);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.success_rate += row.success_rate;
    eta_total += row.mean_eta;
    out.rows.push_back(row);
  }
  if (n_episodes > 0) {
    out.success_rate /= n_episodes;
    out.mean_eta = eta_total / n_episodes;
  }
  return out;
}

inline std::unique_ptr<policies::Controller> make_baseline(Policy p, bool exclude_current) {
  if (p == Policy::random) return std::make_unique<policies::RandomController>();
  if (p == Policy::myopic) return std::make_unique<policies::MyopicController>(exclude_current);
  throw std::invalid_argument("make_baseline: rl is not a baseline");
}

/// Testing always uses the automaton motion model.
inline env::EnvConfig test_env(env::EnvConfig e) {
  e.traffic.model = traffic::MotionModel::automaton;
  return e;
}

inline env::EnvConfig train_env(env::EnvConfig e) {
  e.traffic.model = traffic::MotionModel::uniform;
  return e;
}

// ---------------------------------------------------------------------------
// Checkpoint sets

struct CheckpointSet {
  std::vector<nn::QNetwork<float>> nets;
  int n_cars = 0;
  int subbands = 0;
  double rho = 0;
  long episodes = 0;
};

inline std::string checkpoint_name(int agent, long episode) {
  return "agent_" + std::to_string(agent) + "_ep" + std::to_string(episode);
}

/// Binary checkpoint plus JSON weight dump per agent, and a manifest.
inline void save_checkpoints(const fs::path& dir, const CheckpointSet& set) {
  nlohmann::ordered_json manifest;
  manifest["n_cars"] = set.n_cars;
  manifest["subbands"] = set.subbands;
  manifest["rho"] = set.rho;
  manifest["episodes"] = set.episodes;
  manifest["files"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.nets.size(); ++i) {
    const auto base = checkpoint_name(static_cast<int>(i), set.episodes);
    io::save_checkpoint(dir / (base + ".rqn"), set.nets[i]);
    io::write_file(dir / (base + ".json"), io::weights_json(set.nets[i]).dump(1) + "\n");
    manifest["files"].push_back(base + ".rqn");
  }
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline CheckpointSet load_checkpoints(const fs::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw std::runtime_error("missing checkpoint manifest " + mpath.string());
  const auto manifest = nlohmann::json::parse(io::read_file(mpath));
  CheckpointSet set;
  set.n_cars = manifest.at("n_cars").get<int>();
  set.subbands = manifest.at("subbands").get<int>();
  set.rho = manifest.at("rho").get<double>();
  set.episodes = manifest.at("episodes").get<long>();
  for (const auto& f : manifest.at("files")) {
    const auto p = dir / f.get<std::string>();
    if (!fs::exists(p)) throw std::runtime_error("missing checkpoint " + p.string());
    set.nets.push_back(io::load_checkpoint<float>(p));
  }
  if (static_cast<int>(set.nets.size()) != set.n_cars)
    throw std::runtime_error("checkpoint manifest lists " + std::to_string(set.nets.size()) + " files for " +
                             std::to_string(set.n_cars) + " cars");
  return set;
}

// ---------------------------------------------------------------------------
// Train then test

struct TrainingArtifacts {
  CheckpointSet checkpoints;
  std::vector<rl::TrainLogRow> log;
  std::vector<MetricsRow> metrics;
  std::map<std::string, double> test_success;  // policy -> xi over the test episodes
};

inline std::string train_log_csv(std::span<const rl::TrainLogRow> log, int n_agents, double window,
                                 const std::string& hash, std::uint64_t seed, bool timing) {
  std::vector<double> sr;
  for (const auto& r : log) sr.push_back(r.success_rate);
  const auto smooth = moving_average(sr, static_cast<std::size_t>(window));
  std::string out = csv_preamble(hash, seed);
  out += "episode,steps,mean_success_rate,smoothed_success_rate,mean_eta";
  for (int i = 0; i < n_agents; ++i) out += ",loss_agent_" + std::to_string(i);
  out += ",epsilon,wall_time_ms\n";
  for (std::size_t k = 0; k < log.size(); ++k) {
    const auto& r = log[k];
    out += std::to_string(r.episode) + ',' + std::to_string(r.steps) + ',' + io::num(r.success_rate) + ',' +
           io::num(smooth[k]) + ',' + io::num(r.mean_eta);
    for (double l : r.agent_loss) out += ',' + io::num(l);
    out += ',' + io::num(r.epsilon) + ',' + (timing ? io::num(r.wall_ms) : std::string()) + '\n';
  }
  return out;
}

/// Train with uniform motion, then test every policy with the automaton model
/// on shared episodes. Writes nothing when `out_dir` is empty.
inline TrainingArtifacts run_training(const RunConfig& cfg, const fs::path& out_dir,
                                      const std::function<void(const rl::TrainLogRow&)>& progress = {}) {
  cfg.validate();
  const auto hash = config::hash(cfg);
  TrainingArtifacts art;
  auto trained = rl::train(train_env(cfg.env), cfg.agent, cfg.n_train_episodes, cfg.seed, progress);
  art.log = std::move(trained.log);
  art.checkpoints.n_cars = cfg.env.traffic.n_cars;
  art.checkpoints.subbands = cfg.env.radar.subband_count;
  art.checkpoints.rho = cfg.env.traffic.rho;
  art.checkpoints.episodes = cfg.n_train_episodes;
  for (auto& a : trained.agents) art.checkpoints.nets.push_back(a.online());

  for (const auto& r : art.log)
    art.metrics.push_back({r.episode, "rl", cfg.env.traffic.n_cars, cfg.env.radar.subband_count, cfg.env.traffic.rho,
                           r.success_rate, r.mean_eta, r.wall_ms});

  std::string trace;
  const auto test_cfg = test_env(cfg.env);
  for (Policy p : {Policy::rl, Policy::myopic, Policy::random}) {
    std::unique_ptr<policies::Controller> ctl;
    if (p == Policy::rl) ctl = std::make_unique<RlController>(art.checkpoints.nets);
    else ctl = make_baseline(p, cfg.exclude_current_on_switch);
    auto ev = evaluate(test_cfg, *ctl, cfg.n_eval_episodes, cfg.eval_episode_length, cfg.seed, cfg.n_train_episodes,
                       cfg.write_trace ? &trace : nullptr);
    art.test_success[ctl->name()] = ev.success_rate;
    art.metrics.insert(art.metrics.end(), ev.rows.begin(), ev.rows.end());
  }

  if (!out_dir.empty()) {
    save_checkpoints(out_dir / "checkpoints", art.checkpoints);
    io::write_file(out_dir / "train_log.csv",
                   train_log_csv(art.log, cfg.env.traffic.n_cars, cfg.smoothing_window, hash, cfg.seed, cfg.timing));
    io::write_file(out_dir / "metrics.csv", metrics_csv(art.metrics, hash, cfg.seed, cfg.timing));
    if (cfg.write_trace) io::write_file(out_dir / "trace.jsonl", trace);
    io::write_file(out_dir / "config.json", config::to_json(cfg).dump(2) + "\n");
  }
  return art;
}

/// Evaluate one policy. rl loads checkpoints from `checkpoint_dir`, which
/// may hold networks for more cars than the scenario (lane-consistent reuse).
inline EvalSummary run_eval(const RunConfig& cfg, const fs::path& checkpoint_dir, const fs::path& out_dir) {
  cfg.validate();
  std::unique_ptr<policies::Controller> ctl;
  if (cfg.policy == Policy::rl) {
    auto set = load_checkpoints(checkpoint_dir);
    std::vector<int> assign;
    if (set.n_cars != cfg.env.traffic.n_cars) assign = lane_assignment(set.n_cars, cfg.env.traffic.n_cars);
    ctl = std::make_unique<RlController>(std::move(set.nets), std::move(assign));
  } else {
    ctl = make_baseline(cfg.policy, cfg.exclude_current_on_switch);
  }
  std::string trace;
  auto ev = evaluate(test_env(cfg.env), *ctl, cfg.n_eval_episodes, cfg.eval_episode_length, cfg.seed, 0,
                     cfg.write_trace ? &trace : nullptr);
  if (!out_dir.empty()) {
    io::write_file(out_dir / "metrics.csv", metrics_csv(ev.rows, config::hash(cfg), cfg.seed, cfg.timing));
    if (cfg.write_trace) io::write_file(out_dir / "trace.jsonl", trace);
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPoint {
  double value = 0;
  std::map<std::string, double> success;  // policy -> xi
  std::vector<MetricsRow> rows;           // aggregates, one per policy
};

struct SweepResult {
  std::vector<SweepPoint> points;
};

inline std::string sweep_csv(const SweepResult& r, config::SweepAxis axis, const std::string& hash,
                             std::uint64_t seed, bool timing) {
  std::vector<MetricsRow> rows;
  for (const auto& p : r.points) rows.insert(rows.end(), p.rows.begin(), p.rows.end());
  (void)axis;
  return metrics_csv(rows, hash, seed, timing);
}

/// Evaluate all three policies at each sweep value on shared episodes.
/// subbands: networks are retrained per M. rho: networks trained once at
/// sweep.train_rho are reused. cars: networks trained for the largest N are
/// reused through lane-consistent assignment. A non-empty `checkpoint_dir`
/// supplies the reused networks instead of training them.
inline SweepResult run_sweep(const RunConfig& base, const fs::path& out_dir, const fs::path& checkpoint_dir = {}) {
  base.validate();
  const auto axis = base.sweep.axis;
  const auto& values = base.sweep.values;

  std::optional<CheckpointSet> shared;
  if (axis != config::SweepAxis::subbands) {
    if (!checkpoint_dir.empty()) {
      shared = load_checkpoints(checkpoint_dir);
    } else {
      RunConfig t = base;
      if (axis == config::SweepAxis::rho) t.env.traffic.rho = base.sweep.train_rho;
      if (axis == config::SweepAxis::cars)
        t.env.traffic.n_cars = static_cast<int>(*std::max_element(values.begin(), values.end()));
      auto trained = rl::train(train_env(t.env), t.agent, t.n_train_episodes, t.seed);
      CheckpointSet set;
      set.n_cars = t.env.traffic.n_cars;
      set.subbands = t.env.radar.subband_count;
      set.rho = t.env.traffic.rho;
      set.episodes = t.n_train_episodes;
      for (auto& a : trained.agents) set.nets.push_back(a.online());
      if (!out_dir.empty()) save_checkpoints(out_dir / "checkpoints", set);
      shared = std::move(set);
    }
    if (shared->subbands != base.env.radar.subband_count)
      throw std::runtime_error("reused checkpoints were trained for a different subband count");
  }

  SweepResult result;
  result.points.resize(values.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto work = [&]() {
    for (std::size_t k = next++; k < values.size(); k = next++) {
      try {
        RunConfig c = base;
        const double v = values[k];
        std::vector<nn::QNetwork<float>> nets;
        std::vector<int> assign;
        switch (axis) {
          case config::SweepAxis::subbands: {
            c.env.radar.subband_count = static_cast<int>(v);
            c.validate();
            auto trained = rl::train(train_env(c.env), c.agent, c.n_train_episodes, c.seed);
            for (auto& a : trained.agents) nets.push_back(a.online());
            break;
          }
          case config::SweepAxis::rho:
            c.env.traffic.rho = v;
            nets = shared->nets;
            if (shared->n_cars != c.env.traffic.n_cars) assign = lane_assignment(shared->n_cars, c.env.traffic.n_cars);
            break;
          case config::SweepAxis::cars:
            c.env.traffic.n_cars = static_cast<int>(v);
            nets = shared->nets;
            assign = lane_assignment(shared->n_cars, c.env.traffic.n_cars);
            break;
        }
        c.validate();
        SweepPoint& point = result.points[k];
        point.value = v;
        const auto test_cfg = test_env(c.env);
        for (Policy p : {Policy::rl, Policy::myopic, Policy::random}) {
          std::unique_ptr<policies::Controller> ctl;
          if (p == Policy::rl) ctl = std::make_unique<RlController>(nets, assign);
          else ctl = make_baseline(p, c.exclude_current_on_switch);
          const auto ev = evaluate(test_cfg, *ctl, c.n_eval_episodes, c.eval_episode_length, c.seed);
          point.success[ctl->name()] = ev.success_rate;
          double wall = 0;
          for (const auto& r : ev.rows) wall += r.wall_ms;
          point.rows.push_back({-1, ctl->name(), c.env.traffic.n_cars, c.env.radar.subband_count, c.env.traffic.rho,
                                ev.success_rate, ev.mean_eta, wall});
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int workers = std::min<int>(base.sweep.workers, static_cast<int>(values.size()));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  if (!out_dir.empty()) {
    io::write_file(out_dir / ("sweep_" + config::to_string(axis) + ".csv"),
                   sweep_csv(result, axis, config::hash(base), base.seed, base.timing));
    io::write_file(out_dir / "config.json", config::to_json(base).dump(2) + "\n");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Signal demonstration

struct EtaPoint {
  double inr = 0;
  double tc_working = 0;
  double tc_interferer = 0;
  double eta = 0;
};

/// Relative noise level for a working radar and one non-coherent interferer
/// at each INR, over `pairs` random distinct chirp-interval pairs. A target
/// echo at `echo_snr` is present in every frame.
inline std::vector<EtaPoint> eta_versus_inr(const signal::RadarParams& base, std::span<const double> inrs, int pairs,
                                            double tc_min, double tc_max, double echo_snr, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 41));
  std::vector<std::pair<double, double>> tcs;
  while (static_cast<int>(tcs.size()) < pairs) {
    const double a = std::round((tc_min + uniform01(rng) * (tc_max - tc_min)) * 1e7) / 1e7;
    const double b = std::round((tc_min + uniform01(rng) * (tc_max - tc_min)) * 1e7) / 1e7;
    if (std::abs(a - b) >= 1e-6) tcs.emplace_back(a, b);
  }
  std::vector<EtaPoint> out;
  for (double inr : inrs) {
    for (const auto& [tw, ti] : tcs) {
      auto p = base;
      p.chirp_interval = tw;
      const auto tx = signal::synth_chirp_frame(p, 0);
      const std::vector<signal::EchoSpec> echo{{60.0, 5.0, echo_snr * p.noise_power}};
      const std::vector<signal::InterfererSpec> intf{
          {80.0, 50.0, inr * p.noise_power, ti, uniform01(rng) * 2 * ti, 2 * kPi * uniform01(rng)}};
      out.push_back({inr, tw, ti, signal::measure_eta(p, tx, echo, intf, rng)});
    }
  }
  return out;
}

struct DemoCase {
  std::string name;
  signal::PowerSpectrum up, down;
  std::vector<signal::Detection> detections;
  double eta = 0;
};

/// Three spectra: echo only, echo plus a same-chirp interferer (ghost), echo
/// plus a different-chirp interferer (raised noise floor).
inline std::vector<DemoCase> spectrum_demo(const signal::RadarParams& p, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 42));
  const auto tx = signal::synth_chirp_frame(p, 0);
  const std::vector<signal::EchoSpec> echo{{50.0, 10.0, 4.0 * p.noise_power}};
  const double ip = 10.0 * p.noise_power;
  std::vector<std::pair<std::string, std::vector<signal::InterfererSpec>>> cases{
      {"no_interference", {}},
      {"ghost", {{120.0, 20.0, ip, p.chirp_interval, 0.0, 0.0}}},
      {"raised_noise", {{120.0, 20.0, ip, p.chirp_interval * 0.6, 0.0, 0.0}}}};
  std::vector<DemoCase> out;
  for (auto& [name, intf] : cases) {
    const auto rx = signal::synth_received(p, tx, echo, intf, rng);
    const auto spectra = signal::mix_and_spectrum(p, rx, tx);
    DemoCase c;
    c.name = name;
    c.up = signal::average_power(spectra.up);
    c.down = signal::average_power(spectra.down);
    c.detections = signal::detect_targets(p, c.up, c.down, 0);
    c.eta = signal::relative_noise_level(signal::frame_noise_level(p, spectra),
                                         signal::interference_free_level(p, p.chirp_interval));
    out.push_back(std::move(c));
  }
  return out;
}

inline void run_signal_demo(const RunConfig& cfg, const fs::path& out_dir) {
  const auto hash = config::hash(cfg);
  for (const auto& c : spectrum_demo(cfg.env.radar, cfg.seed)) {
    io::write_file(out_dir / ("spectrum_" + c.name + "_up.csv"), csv_preamble(hash, cfg.seed) + io::spectrum_csv(c.up));
    io::write_file(out_dir / ("spectrum_" + c.name + "_down.csv"),
                   csv_preamble(hash, cfg.seed) + io::spectrum_csv(c.down));
  }
  std::vector<double> inrs;
  for (int i = 1; i <= 100; ++i) inrs.push_back(i);
  const auto pts = eta_versus_inr(cfg.env.radar, inrs, 10, cfg.env.chirp_min, cfg.env.chirp_max, 4.0, cfg.seed);
  std::string csv = csv_preamble(hash, cfg.seed) + "inr,tc_working_us,tc_interferer_us,eta\n";
  for (const auto& p : pts)
    csv += io::num(p.inr) + ',' + io::num(p.tc_working * 1e6) + ',' + io::num(p.tc_interferer * 1e6) + ',' +
           io::num(p.eta) + '\n';
  io::write_file(out_dir / "eta_vs_inr.csv", csv);
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckGroup {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0;
};

/// Central differences (step h) against BPTT in double precision on a
/// randomly initialized network and random batch. Relative error is
/// |a - b| / max(|a|, |b|, floor).
inline std::vector<GradCheckGroup> gradient_check(const nn::NetShape& shape, int k, int p, std::uint64_t seed,
                                                  double h = 1e-5, double floor = 1e-8) {
  Rng rng(derive_seed(seed, 51));
  auto net = nn::init_params<double>(shape, rng);
  for (auto& v : net.params()) v += 0.2 * normal(rng, 0.0, 1.0);  // move biases off their constants
  nn::SequenceBatch<double> b;
  for (int t = 0; t < p; ++t) {
    b.obs.push_back(nn::Mat<double>::NullaryExpr(shape.input, k, [&rng] { return normal(rng, 0.0, 1.0); }));
    std::vector<int> a(static_cast<std::size_t>(k));
    for (auto& u : a) u = uniform_int(rng, 0, shape.output - 1);
    b.action.push_back(std::move(a));
  }
  b.h0 = nn::Mat<double>::NullaryExpr(shape.state_size(), k, [&rng] { return 0.5 * normal(rng, 0.0, 1.0); });
  b.target = nn::Mat<double>::NullaryExpr(p, k, [&rng] { return normal(rng, 0.0, 1.0); });
  const auto g = nn::bptt_gradients<double>(net, b);

  const nn::Layout lay(shape);
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> groups;
  groups.push_back({"fcl.weight", {lay.fc_w, lay.fc_b}});
  groups.push_back({"fcl.bias", {lay.fc_b, lay.lstm_w[0]}});
  const char* gate_names[4] = {"input", "forget", "candidate", "output"};
  for (std::size_t l = 0; l < shape.lstm.size(); ++l) {
    const std::size_t rows = static_cast<std::size_t>(4 * shape.lstm[l]);
    const std::size_t cols = static_cast<std::size_t>(shape.layer_input(l) + shape.lstm[l]);
    (void)cols;
    for (int gate = 0; gate < 4; ++gate)
      groups.push_back({"lstm" + std::to_string(l + 1) + "." + gate_names[gate], {lay.lstm_w[l], lay.lstm_w[l]}});
    groups.push_back({"lstm" + std::to_string(l + 1) + ".bias", {lay.lstm_b[l], lay.lstm_b[l] + rows}});
  }
  groups.push_back({"head.weight", {lay.head_w, lay.head_b}});
  groups.push_back({"head.bias", {lay.head_b, lay.total}});

  auto rel_error = [&](std::size_t i) {
    auto n2 = net;
    n2.params()[i] += h;
    const double lp = nn::batch_loss<double>(n2, b);
    n2.params()[i] -= 2 * h;
    const double lm = nn::batch_loss<double>(n2, b);
    const double fd = (lp - lm) / (2 * h);
    const double an = g.grad[i];
    return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
  };

  std::vector<GradCheckGroup> out;
  for (const auto& [name, range] : groups) {
    GradCheckGroup grp{name, 0, 0.0};
    auto consider = [&](std::size_t i) {
      grp.max_rel_error = std::max(grp.max_rel_error, rel_error(i));
      ++grp.count;
    };
    const auto dot = name.find('.');
    const std::string tail = name.substr(dot + 1);
    const bool gate_group = name.rfind("lstm", 0) == 0 && tail != "bias";
    if (gate_group) {
      // Weights of one gate: rows [gate*H, (gate+1)*H) of a column-major 4H x (I+H) matrix.
      const std::size_t l = static_cast<std::size_t>(std::stoi(name.substr(4, dot - 4)) - 1);
      const int hsz = shape.lstm[l];
      const int rows = 4 * hsz;
      const int cols = shape.layer_input(l) + hsz;
      int gate = 0;
      while (tail != gate_names[gate]) ++gate;
      for (int c = 0; c < cols; ++c)
        for (int r = gate * hsz; r < (gate + 1) * hsz; ++r)
          consider(lay.lstm_w[l] + static_cast<std::size_t>(c * rows + r));
    } else {
      for (std::size_t i = range.first; i < range.second; ++i) consider(i);
    }
    out.push_back(grp);
  }
  return out;
}

inline nn::NetShape reduced_shape() {
  nn::NetShape s;
  s.input = 7;
  s.fcl = 4;
  s.lstm = {4, 4, 3, 2};
  s.output = 3;
  return s;
}

}  // namespace radaralloc::harness
