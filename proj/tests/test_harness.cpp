#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "radaralloc/radaralloc.hpp"

using namespace radaralloc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("radaralloc_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Metrics, SuccessRateHandExample) {
  // Radar 0 succeeds 2/4, radar 1 succeeds 4/4.
  const std::vector<std::vector<double>> etas{{1.0, 12.0, 10.9, 11.0}, {1, 2, 3, 4}};
  EXPECT_DOUBLE_EQ(harness::success_rate(etas, 11.0), 0.75);
  EXPECT_THROW(harness::success_rate({}, 11.0), std::invalid_argument);
}

TEST(Metrics, MovingAverage) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  const auto m = harness::moving_average(v, 2);
  const std::vector<double> expected{1, 1.5, 2.5, 3.5, 4.5};
  EXPECT_EQ(m, expected);
  EXPECT_THROW(harness::moving_average(v, 0), std::invalid_argument);
}

TEST(Metrics, CsvLayout) {
  const std::vector<harness::MetricsRow> rows{{3, "myopic", 6, 2, 0.02, 0.5, 4.25, 12.5}};
  EXPECT_EQ(harness::metrics_csv(rows, "deadbeef", 7, false),
            "# config_hash=deadbeef seed=7\nepisode,policy,N,M,rho,success_rate,mean_eta,wall_ms\n"
            "3,myopic,6,2,0.02,0.5,4.25,\n");
  EXPECT_NE(harness::metrics_csv(rows, "deadbeef", 7, true).find(",12.5\n"), std::string::npos);
}

TEST(LaneAssignment, TakesFirstCarsOfEachLane) {
  EXPECT_EQ(harness::lane_assignment(6, 4), (std::vector<int>{0, 1, 3, 4}));
  EXPECT_EQ(harness::lane_assignment(8, 5), (std::vector<int>{0, 1, 2, 4, 5}));
  EXPECT_EQ(harness::lane_assignment(6, 6), (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_THROW(harness::lane_assignment(4, 6), std::invalid_argument);
}

TEST(Evaluate, SharedEpisodesAcrossPolicies) {
  env::EnvConfig cfg = harness::test_env({});
  policies::RandomController r;
  policies::MyopicController m;
  const auto a = harness::evaluate(cfg, r, 3, 30, 5);
  const auto b = harness::evaluate(cfg, m, 3, 30, 5);
  const auto c = harness::evaluate(cfg, r, 3, 30, 5);
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_EQ(a.success_rate, c.success_rate);
  // Traffic does not depend on actions, so the trace positions line up.
  std::string ta, tb;
  harness::evaluate(cfg, r, 1, 5, 5, 0, &ta);
  harness::evaluate(cfg, m, 1, 5, 5, 0, &tb);
  auto positions = [](const std::string& trace) {
    std::vector<double> out;
    std::istringstream in(trace);
    for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line).at("position"));
    return out;
  };
  EXPECT_EQ(positions(ta), positions(tb));
  EXPECT_EQ(positions(ta).size(), 5u * static_cast<std::size_t>(cfg.traffic.n_cars));
  (void)b;
}

TEST(Evaluate, MoreSubbandsHelpRandom) {
  env::EnvConfig one = harness::test_env({});
  one.radar.subband_count = 1;
  env::EnvConfig four = one;
  four.radar.subband_count = 4;
  policies::RandomController r;
  EXPECT_LT(harness::evaluate(one, r, 20, 50, 2).success_rate, harness::evaluate(four, r, 20, 50, 2).success_rate);
}

TEST(Checkpoints, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("ckpt");
  Rng rng(1);
  harness::CheckpointSet set;
  set.n_cars = 2;
  set.subbands = 3;
  set.rho = 0.02;
  set.episodes = 5;
  for (int i = 0; i < 2; ++i) set.nets.push_back(nn::init_params<float>(rng, 3));
  harness::save_checkpoints(dir, set);
  EXPECT_TRUE(fs::exists(dir / "agent_0_ep5.rqn"));
  EXPECT_TRUE(fs::exists(dir / "agent_1_ep5.json"));
  const auto back = harness::load_checkpoints(dir);
  EXPECT_EQ(back.n_cars, 2);
  EXPECT_EQ(back.subbands, 3);
  ASSERT_EQ(back.nets.size(), 2u);
  EXPECT_EQ(back.nets[1], set.nets[1]);
  const auto dump = nlohmann::json::parse(io::read_file(dir / "agent_0_ep5.json"));
  EXPECT_EQ(dump.at("lstm").size(), 4u);
  EXPECT_FLOAT_EQ(dump.at("head").at("bias")[0].get<float>(), set.nets[0].head_bias()(0));
  fs::remove(dir / "agent_1_ep5.rqn");
  EXPECT_THROW(harness::load_checkpoints(dir), std::runtime_error);
  EXPECT_THROW(harness::load_checkpoints(dir / "nope"), std::runtime_error);
}

TEST(Training, TinyRunWritesArtifacts) {
  const auto dir = scratch_dir("train");
  config::RunConfig cfg;
  cfg.env.traffic.n_cars = 2;
  cfg.agent.shape = {7, 4, {3, 2}, 2};
  cfg.agent.batch_K = 2;
  cfg.agent.batch_P = 4;
  cfg.agent.warmup_episodes = 1;
  cfg.agent.min_episode_length = 5;
  cfg.agent.max_episode_length = 6;
  cfg.n_train_episodes = 3;
  cfg.n_eval_episodes = 2;
  cfg.eval_episode_length = 10;
  cfg.write_trace = true;
  const auto art = harness::run_training(cfg, dir);
  for (const char* f : {"train_log.csv", "metrics.csv", "trace.jsonl", "config.json", "checkpoints/manifest.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(art.test_success.size(), 3u);
  const auto log = io::read_file(dir / "train_log.csv");
  EXPECT_EQ(log.rfind("# config_hash=" + config::hash(cfg), 0), 0u);
  EXPECT_NE(log.find("episode,steps,mean_success_rate,smoothed_success_rate,mean_eta,loss_agent_0,loss_agent_1,"
                     "epsilon,wall_time_ms\n"),
            std::string::npos);

  // The saved config reloads to the same hash, and eval reuses the networks.
  const auto reloaded = config::load(dir / "config.json");
  EXPECT_EQ(config::hash(reloaded), config::hash(cfg));
  auto ev_cfg = cfg;
  ev_cfg.policy = config::Policy::rl;
  const auto ev = harness::run_eval(ev_cfg, dir / "checkpoints", {});
  EXPECT_DOUBLE_EQ(ev.success_rate, art.test_success.at("rl"));
}

TEST(GradCheck, ReducedNetworkWithinTolerance) {
  const auto groups = harness::gradient_check(harness::reduced_shape(), 3, 4, 1);
  ASSERT_FALSE(groups.empty());
  for (const auto& g : groups) EXPECT_LT(g.max_rel_error, 1e-4) << g.name;
}

TEST(Config, MissingFileNamesPath) {
  try {
    config::load("/definitely/not/here.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/definitely/not/here.json"), std::string::npos);
  }
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  using nlohmann::json;
  EXPECT_THROW(config::from_json(json{{"sed", 1}}), ConfigError);
  EXPECT_THROW(config::from_json(json{{"radar", {{"bandwith_hz", 1}}}}), ConfigError);
  EXPECT_THROW(config::from_json(json{{"policy", "greedy"}}), ConfigError);
  EXPECT_THROW(config::from_json(json{{"traffic", {{"cars", "six"}}}}), ConfigError);
  EXPECT_THROW(config::from_json(json{{"agent", {{"gamma", 2.0}}}}), ConfigError);
  EXPECT_THROW(config::from_json(json::array()), ConfigError);
}

TEST(Config, UnitsConverted) {
  const auto c = config::from_json(nlohmann::json::parse(R"({
    "radar": {"tx_power_lrr_dbm": 30, "antenna_gain_db": 20, "chirp_interval_us": 25, "beamwidth_deg": 90},
    "traffic": {"v2": -20, "v_max_2": -25},
    "env": {"chirp_min_us": 15}
  })"));
  EXPECT_NEAR(c.env.radar.tx_power_lrr, 1.0, 1e-12);
  EXPECT_NEAR(c.env.radar.antenna_gain, 100.0, 1e-9);
  EXPECT_NEAR(c.env.radar.chirp_interval, 25e-6, 1e-18);
  EXPECT_NEAR(c.env.radar.beamwidth, kPi / 2, 1e-12);
  EXPECT_DOUBLE_EQ(c.env.traffic.v2, 20.0);
  EXPECT_NEAR(c.env.chirp_min, 15e-6, 1e-18);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  config::RunConfig a;
  auto b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config::hash(a), config::hash(b));
  b.seed = 2;
  EXPECT_NE(config::hash(a), config::hash(b));
  EXPECT_EQ(config::hash(a).size(), 8u);
  EXPECT_EQ(config::hash(config::from_json(config::to_json(a))), config::hash(a));
}

TEST(Io, NumberFormatting) {
  EXPECT_EQ(io::num(0.1), "0.1");
  EXPECT_EQ(io::num(3.0), "3");
  EXPECT_EQ(io::num(std::nan("")), "");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(std::stod(io::num(v)), v);
  }
}

TEST(Io, SpectrumCsv) {
  signal::PowerSpectrum s;
  s.power = {4.0, 9.0, 1.0, 0.0};
  s.bin_width = 10.0;
  EXPECT_EQ(io::spectrum_csv(s), "bin_index,frequency_hz,magnitude\n0,0,2\n1,10,3\n2,-20,1\n3,-10,0\n");
}

TEST(Io, WriteFileCreatesDirectories) {
  const auto dir = scratch_dir("io");
  io::write_file(dir / "a" / "b" / "c.txt", "hi");
  EXPECT_EQ(io::read_file(dir / "a" / "b" / "c.txt"), "hi");
  EXPECT_THROW(io::read_file(dir / "missing"), std::runtime_error);
}
