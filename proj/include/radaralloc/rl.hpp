#pragma once

// Independent recurrent Q-learners, one per radar: episodic replay,
// sequence batches, target network, epsilon-greedy acting.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "radaralloc/common.hpp"
#include "radaralloc/env.hpp"
#include "radaralloc/nn.hpp"

namespace radaralloc::rl {

using env::Features;
using nn::Mat;

struct AgentConfig {
  double gamma = 0.9;
  double epsilon = 0.05;
  int batch_K = 40;
  int batch_P = 20;
  int target_sync_C = 20;  // optimizer updates between target copies
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  int warmup_episodes = 10;
  int memory_episodes = 200;
  int min_episode_length = 20;
  int max_episode_length = 200;
  int update_every = 1;  // environment steps between learning updates
  nn::NetShape shape;    // output width is overwritten with M

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("agent: ") + what);
    };
    require(gamma >= 0 && gamma <= 1, "gamma must lie in [0, 1]");
    require(epsilon >= 0 && epsilon <= 1, "epsilon must lie in [0, 1]");
    require(batch_K >= 1 && batch_P >= 1, "batch_K and batch_P must be >= 1");
    require(target_sync_C >= 1, "target_sync_C must be >= 1");
    require(learning_rate > 0, "learning_rate must be positive");
    require(grad_clip > 0, "grad_clip must be positive");
    require(warmup_episodes >= 0, "warmup_episodes must be >= 0");
    require(memory_episodes >= 1, "memory_episodes must be >= 1");
    require(min_episode_length >= 1 && min_episode_length <= max_episode_length,
            "need 1 <= min_episode_length <= max_episode_length");
    require(update_every >= 1, "update_every must be >= 1");
    shape.validate();
  }
};

struct Experience {
  Features obs{};
  std::vector<float> hidden;  // stacked (h, c) before acting
  int action = 0;
  float reward = 0;
  Features next_obs{};
  std::vector<float> next_hidden;
};

/// Argmax with probability 1 - epsilon (lowest index wins ties), otherwise
/// uniform. Always consumes one uniform draw, plus one more when exploring.
inline int select_action(std::span<const float> q, double epsilon, Rng& rng) {
  if (q.empty()) throw std::invalid_argument("select_action: no actions");
  if (uniform01(rng) < epsilon) return uniform_int(rng, 0, static_cast<int>(q.size()) - 1);
  int best = 0;
  for (int u = 1; u < static_cast<int>(q.size()); ++u)
    if (q[static_cast<std::size_t>(u)] > q[static_cast<std::size_t>(best)]) best = u;
  return best;
}

struct SampleRow {
  std::size_t episode = 0;  // index into ReplayMemory::episodes()
  std::size_t start = 0;
};

/// Experiences grouped by episode; the oldest episode is evicted first.
class ReplayMemory {
 public:
  explicit ReplayMemory(int capacity_episodes = 200) : capacity_(static_cast<std::size_t>(capacity_episodes)) {
    if (capacity_episodes < 1) throw std::invalid_argument("replay memory: capacity must be >= 1");
  }

  void push(long episode_id, Experience e) {
    if (ids_.empty() || ids_.back() != episode_id) {
      if (!ids_.empty() && episode_id < ids_.back())
        throw std::invalid_argument("replay memory: episode ids must not go backwards");
      ids_.push_back(episode_id);
      episodes_.emplace_back();
      while (episodes_.size() > capacity_) {
        episodes_.pop_front();
        ids_.pop_front();
      }
    }
    episodes_.back().push_back(std::move(e));
  }

  const std::deque<std::vector<Experience>>& episodes() const { return episodes_; }
  const std::deque<long>& episode_ids() const { return ids_; }
  std::size_t size() const { return episodes_.size(); }
  bool empty() const { return episodes_.empty(); }

  /// K rows, each a uniformly chosen eligible episode and a uniform start.
  std::vector<SampleRow> sample(int k, int p, Rng& rng) const {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < episodes_.size(); ++i)
      if (episodes_[i].size() >= static_cast<std::size_t>(p)) eligible.push_back(i);
    if (eligible.empty()) throw std::runtime_error("replay memory: no episode holds a full sequence");
    std::vector<SampleRow> rows(static_cast<std::size_t>(k));
    for (auto& r : rows) {
      r.episode = eligible[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(eligible.size()) - 1))];
      const int last_start = static_cast<int>(episodes_[r.episode].size()) - p;
      r.start = static_cast<std::size_t>(uniform_int(rng, 0, last_start));
    }
    return rows;
  }

  const Experience& at(const SampleRow& row, std::size_t t) const { return episodes_[row.episode][row.start + t]; }

 private:
  std::size_t capacity_;
  std::deque<std::vector<Experience>> episodes_;
  std::deque<long> ids_;
};

/// y = r + gamma * max_u Qhat(next_obs, next_hidden, u), as a P x K matrix.
inline Mat<float> compute_targets(const nn::QNetwork<float>& target, const ReplayMemory& memory,
                                  std::span<const SampleRow> rows, int p, double gamma) {
  const auto& s = target.shape();
  const auto k = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index cols = k * p;
  Mat<float> x(s.input, cols), st(s.state_size(), cols);
  Mat<float> r(p, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (int t = 0; t < p; ++t) {
      const auto& e = memory.at(rows[static_cast<std::size_t>(j)], static_cast<std::size_t>(t));
      const Eigen::Index c = j * p + t;
      x.col(c) = Eigen::Map<const Eigen::VectorXf>(e.next_obs.data(), s.input);
      st.col(c) = Eigen::Map<const Eigen::VectorXf>(e.next_hidden.data(), s.state_size());
      r(t, j) = e.reward;
    }
  }
  const Mat<float> q = nn::forward_batch<float>(target, x, st);
  Mat<float> y(p, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (int t = 0; t < p; ++t)
      y(t, j) = r(t, j) + static_cast<float>(gamma) * q.col(j * p + t).maxCoeff();
  return y;
}

/// Sequence batch for BPTT from sampled rows and their targets.
inline nn::SequenceBatch<float> assemble_batch(const nn::NetShape& s, const ReplayMemory& memory,
                                               std::span<const SampleRow> rows, int p, Mat<float> targets) {
  nn::SequenceBatch<float> b;
  const auto k = static_cast<Eigen::Index>(rows.size());
  b.h0.resize(s.state_size(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& first = memory.at(rows[static_cast<std::size_t>(j)], 0);
    b.h0.col(j) = Eigen::Map<const Eigen::VectorXf>(first.hidden.data(), s.state_size());
  }
  b.obs.resize(static_cast<std::size_t>(p));
  b.action.resize(static_cast<std::size_t>(p));
  for (int t = 0; t < p; ++t) {
    auto& x = b.obs[static_cast<std::size_t>(t)];
    x.resize(s.input, k);
    auto& a = b.action[static_cast<std::size_t>(t)];
    a.resize(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& e = memory.at(rows[static_cast<std::size_t>(j)], static_cast<std::size_t>(t));
      x.col(j) = Eigen::Map<const Eigen::VectorXf>(e.obs.data(), s.input);
      a[static_cast<std::size_t>(j)] = e.action;
    }
  }
  b.target = std::move(targets);
  return b;
}

/// One radar's learner. Holds its own online and target networks, optimizer,
/// memory and random stream; nothing is shared between agents.
class Agent {
 public:
  Agent(AgentConfig cfg, int subband_count, std::uint64_t seed) : cfg_(std::move(cfg)), memory_(cfg_.memory_episodes), rng_(seed) {
    cfg_.shape.output = subband_count;
    cfg_.validate();
    online_ = nn::init_params<float>(cfg_.shape, rng_);
    target_ = online_;
    opt_.learning_rate = cfg_.learning_rate;
    state_ = nn::zero_state<float>(cfg_.shape);
  }

  /// Wrap an already trained network for greedy evaluation.
  Agent(AgentConfig cfg, nn::QNetwork<float> net, std::uint64_t seed)
      : cfg_(std::move(cfg)), memory_(cfg_.memory_episodes), rng_(seed), online_(std::move(net)) {
    cfg_.shape = online_.shape();
    cfg_.validate();
    target_ = online_;
    opt_.learning_rate = cfg_.learning_rate;
    state_ = nn::zero_state<float>(cfg_.shape);
  }

  const AgentConfig& config() const { return cfg_; }
  const nn::QNetwork<float>& online() const { return online_; }
  nn::QNetwork<float>& online() { return online_; }
  const nn::QNetwork<float>& target() const { return target_; }
  const ReplayMemory& memory() const { return memory_; }
  long updates() const { return updates_; }
  Rng& rng() { return rng_; }

  void begin_episode() { state_.setZero(); }

  /// Forward one observation, advance the hidden state, pick an action.
  /// The pre-step state is returned through `hidden_before` if requested.
  int act(const Features& obs, double epsilon, std::vector<float>* hidden_before = nullptr) {
    if (hidden_before) hidden_before->assign(state_.data(), state_.data() + state_.size());
    const Mat<float> x = Eigen::Map<const Eigen::VectorXf>(obs.data(), cfg_.shape.input);
    const Mat<float> q = nn::forward_batch<float>(online_, x, state_);
    return select_action(std::span<const float>(q.data(), static_cast<std::size_t>(q.size())), epsilon, rng_);
  }

  std::vector<float> hidden() const { return {state_.data(), state_.data() + state_.size()}; }

  void remember(long episode_id, Experience e) { memory_.push(episode_id, std::move(e)); }

  /// One gradient step on a sampled batch; returns the batch loss, or NaN if
  /// no episode is long enough yet.
  double learn() {
    bool ready = false;
    for (const auto& ep : memory_.episodes())
      if (ep.size() >= static_cast<std::size_t>(cfg_.batch_P)) ready = true;
    if (!ready) return std::numeric_limits<double>::quiet_NaN();
    const auto rows = memory_.sample(cfg_.batch_K, cfg_.batch_P, rng_);
    auto y = compute_targets(target_, memory_, rows, cfg_.batch_P, cfg_.gamma);
    const auto batch = assemble_batch(cfg_.shape, memory_, rows, cfg_.batch_P, std::move(y));
    auto g = nn::bptt_gradients<float>(online_, batch);
    nn::clip_global_norm<float>(g.grad, static_cast<float>(cfg_.grad_clip));
    opt_.step(online_.params(), g.grad);
    if (++updates_ % cfg_.target_sync_C == 0) sync_target();
    return g.loss;
  }

  void sync_target() { target_ = online_; }

 private:
  AgentConfig cfg_;
  ReplayMemory memory_;
  Rng rng_;
  nn::QNetwork<float> online_, target_;
  nn::Adam<float> opt_;
  Mat<float> state_;
  long updates_ = 0;
};

/// Per-episode training record.
struct TrainLogRow {
  long episode = 0;
  int steps = 0;
  double success_rate = 0;
  double mean_eta = 0;
  std::vector<double> agent_loss;  // NaN when the agent did not update
  double epsilon = 0;
  double wall_ms = 0;
};

enum Stream : std::uint64_t {
  kTrainEpisodeStream = 11,
  kAgentStream = 12,
  kScheduleStream = 13,
};

struct TrainResult {
  std::vector<Agent> agents;
  std::vector<TrainLogRow> log;
};

/// Algorithm loop: per episode reset, act all, step, store, then update
/// every agent every `update_every` environment steps once warm-up is over.
inline TrainResult train(const env::EnvConfig& env_cfg, const AgentConfig& agent_cfg, int n_episodes,
                         std::uint64_t seed,
                         const std::function<void(const TrainLogRow&)>& on_episode = {}) {
  if (n_episodes < 0) throw ConfigError("train: n_episodes must be >= 0");
  agent_cfg.validate();
  env::Environment environment(env_cfg);
  const int n = env_cfg.traffic.n_cars;
  const int m = env_cfg.radar.subband_count;
  TrainResult res;
  res.agents.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) res.agents.emplace_back(agent_cfg, m, derive_seed(seed, kAgentStream, static_cast<std::uint64_t>(i)));

  Rng schedule(derive_seed(seed, kScheduleStream));
  long global_step = 0;
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::vector<std::vector<float>> before(static_cast<std::size_t>(n));
  std::vector<Features> feats(static_cast<std::size_t>(n));

  for (int ep = 0; ep < n_episodes; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    const int length = uniform_int(schedule, agent_cfg.min_episode_length, agent_cfg.max_episode_length);
    const auto& obs0 = environment.reset(derive_seed(seed, kTrainEpisodeStream, static_cast<std::uint64_t>(ep)));
    const double road = environment.scenario().road_length;
    for (int i = 0; i < n; ++i) {
      res.agents[static_cast<std::size_t>(i)].begin_episode();
      feats[static_cast<std::size_t>(i)] = env::encode(obs0[static_cast<std::size_t>(i)], m, road, env_cfg.traffic.d_max);
    }
    TrainLogRow row;
    row.episode = ep;
    row.steps = length;
    row.epsilon = agent_cfg.epsilon;
    row.agent_loss.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<int> loss_count(static_cast<std::size_t>(n), 0);
    double successes = 0, eta_sum = 0;
    const bool learning = ep >= agent_cfg.warmup_episodes;

    for (int t = 0; t < length; ++t) {
      for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        actions[k] = res.agents[k].act(feats[k], agent_cfg.epsilon, &before[k]);
      }
      const auto result = environment.step(actions);
      for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        Experience e;
        e.obs = feats[k];
        e.hidden = std::move(before[k]);
        e.action = actions[k];
        e.reward = static_cast<float>(result.outcomes[k].reward);
        feats[k] = env::encode(result.observations[k], m, road, env_cfg.traffic.d_max);
        e.next_obs = feats[k];
        e.next_hidden = res.agents[k].hidden();
        res.agents[k].remember(ep, std::move(e));
        successes += result.outcomes[k].reward;
        eta_sum += result.outcomes[k].eta;
      }
      ++global_step;
      if (learning && global_step % agent_cfg.update_every == 0) {
        for (int i = 0; i < n; ++i) {
          const auto k = static_cast<std::size_t>(i);
          const double loss = res.agents[k].learn();
          if (!std::isnan(loss)) {
            row.agent_loss[k] += loss;
            ++loss_count[k];
          }
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      row.agent_loss[k] = loss_count[k] ? row.agent_loss[k] / loss_count[k] : std::numeric_limits<double>::quiet_NaN();
    }
    row.success_rate = successes / (static_cast<double>(n) * length);
    row.mean_eta = eta_sum / (static_cast<double>(n) * length);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (on_episode) on_episode(row);
    res.log.push_back(std::move(row));
  }
  return res;
}

}  // namespace radaralloc::rl
