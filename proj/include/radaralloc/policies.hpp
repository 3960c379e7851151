#pragma once

// Baseline subband selection and the controller interface the harness drives.

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "radaralloc/common.hpp"
#include "radaralloc/env.hpp"

namespace radaralloc::policies {

inline int random_policy(int subband_count, Rng& rng) {
  if (subband_count < 1) throw std::invalid_argument("random_policy: M must be >= 1");
  return uniform_int(rng, 0, subband_count - 1);
}

struct MyopicState {
  int last_subband = 0;
};

struct MyopicDecision {
  int subband = 0;
  MyopicState state;
};

/// Keep the subband while eta < eta0, otherwise draw a new one uniformly
/// (optionally excluding the failed subband when M > 1).
inline MyopicDecision myopic_policy(MyopicState state, double eta, double eta0, int subband_count, Rng& rng,
                                    bool exclude_current = false) {
  if (subband_count < 1) throw std::invalid_argument("myopic_policy: M must be >= 1");
  if (eta < eta0) return {state.last_subband, state};
  int u;
  if (exclude_current && subband_count > 1) {
    u = uniform_int(rng, 0, subband_count - 2);
    if (u >= state.last_subband) ++u;
  } else {
    u = uniform_int(rng, 0, subband_count - 1);
  }
  state.last_subband = u;
  return {u, state};
}

/// Chooses one subband per car each period.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(const env::Environment& e, std::uint64_t episode_seed) = 0;
  virtual void act(const env::Environment& e, std::span<int> actions) = 0;
};

class RandomController final : public Controller {
 public:
  std::string name() const override { return "random"; }
  void begin_episode(const env::Environment&, std::uint64_t episode_seed) override { rng_ = make_rng(episode_seed, 21); }
  void act(const env::Environment& e, std::span<int> actions) override {
    for (auto& a : actions) a = random_policy(e.subband_count(), rng_);
  }

 private:
  Rng rng_;
};

class MyopicController final : public Controller {
 public:
  explicit MyopicController(bool exclude_current = false) : exclude_(exclude_current) {}
  std::string name() const override { return "myopic"; }

  void begin_episode(const env::Environment& e, std::uint64_t episode_seed) override {
    rng_ = make_rng(episode_seed, 22);
    state_.assign(static_cast<std::size_t>(e.car_count()), MyopicState{});
    for (auto& s : state_) s.last_subband = random_policy(e.subband_count(), rng_);
    first_ = true;
  }

  void act(const env::Environment& e, std::span<int> actions) override {
    const auto& obs = e.observations();
    const double eta0 = e.config().radar.eta_threshold;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      if (!first_) state_[i] = myopic_policy(state_[i], obs[i].last_eta, eta0, e.subband_count(), rng_, exclude_).state;
      actions[i] = state_[i].last_subband;
    }
    first_ = false;
  }

 private:
  bool exclude_;
  bool first_ = true;
  Rng rng_;
  std::vector<MyopicState> state_;
};

}  // namespace radaralloc::policies
