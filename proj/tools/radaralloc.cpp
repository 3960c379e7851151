// Command-line front end: train, eval, sweep, signal-demo, gradcheck.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "radaralloc/radaralloc.hpp"

namespace {

using namespace radaralloc;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> policy;
  std::optional<std::string> fidelity;
  bool timing = false;
  bool trace = false;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "JSON configuration file");
  sub->add_option("--seed", o.seed, "base random seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--policy", o.policy, "rl, random or myopic");
  sub->add_option("--fidelity", o.fidelity, "analytic or signal");
  sub->add_flag("--timing", o.timing, "record wall-clock times in CSV output");
  sub->add_flag("--trace", o.trace, "write JSON-lines episode traces");
}

config::RunConfig resolve(const CommonOptions& o) {
  config::RunConfig cfg = o.config_path.empty() ? config::RunConfig{} : config::load(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.policy) cfg.policy = config::parse_policy(*o.policy);
  if (o.fidelity) cfg.env.fidelity = config::parse_fidelity(*o.fidelity);
  if (o.timing) cfg.timing = true;
  if (o.trace) cfg.write_trace = true;
  cfg.validate();
  return cfg;
}

void print_test_summary(const std::map<std::string, double>& xs) {
  for (const auto& [name, v] : xs) std::printf("test success rate %-7s %.4f\n", name.c_str(), v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized radar subband allocation: simulation, training and evaluation"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, sweep_o, demo_o, grad_o;
  std::string eval_checkpoints, sweep_checkpoints, sweep_axis;
  std::vector<double> sweep_values;

  auto* train = app.add_subcommand("train", "train one Q-network per radar, then test all policies");
  add_common(train, train_o);
  auto* eval = app.add_subcommand("eval", "evaluate a policy on test episodes");
  add_common(eval, eval_o);
  eval->add_option("--checkpoints", eval_checkpoints, "checkpoint directory (default <out>/checkpoints)");
  auto* sweep = app.add_subcommand("sweep", "compare policies over subbands, rho or car count");
  add_common(sweep, sweep_o);
  sweep->add_option("--axis", sweep_axis, "subbands, rho or cars");
  sweep->add_option("--values", sweep_values, "sweep values");
  sweep->add_option("--checkpoints", sweep_checkpoints, "reuse networks from this directory");
  auto* demo = app.add_subcommand("signal-demo", "write example spectra and eta-versus-INR data");
  add_common(demo, demo_o);
  auto* grad = app.add_subcommand("gradcheck", "compare BPTT gradients with finite differences");
  add_common(grad, grad_o);

  if (argc > 1 && argv[1][0] != '-') {
    const std::string name = argv[1];
    bool known = false;
    for (const auto* s : app.get_subcommands({})) known = known || s->get_name() == name;
    if (!known) {
      std::cerr << "error: unknown subcommand '" << name << "'\n\n" << app.help();
      return 2;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train->parsed()) {
      const auto cfg = resolve(train_o);
      const auto art = harness::run_training(cfg, cfg.output_dir, [](const rl::TrainLogRow& r) {
        if ((r.episode + 1) % 100 == 0)
          std::fprintf(stderr, "episode %ld success %.3f\n", r.episode + 1, r.success_rate);
      });
      print_test_summary(art.test_success);
    } else if (eval->parsed()) {
      const auto cfg = resolve(eval_o);
      const std::string dir = eval_checkpoints.empty() ? (std::filesystem::path(cfg.output_dir) / "checkpoints").string()
                                                       : eval_checkpoints;
      const auto ev = harness::run_eval(cfg, dir, cfg.output_dir);
      std::printf("test success rate %-7s %.4f\n", config::to_string(cfg.policy).c_str(), ev.success_rate);
    } else if (sweep->parsed()) {
      auto cfg = resolve(sweep_o);
      if (!sweep_axis.empty()) cfg.sweep.axis = config::parse_axis(sweep_axis);
      if (!sweep_values.empty()) cfg.sweep.values = sweep_values;
      cfg.validate();
      const auto res = harness::run_sweep(cfg, cfg.output_dir, sweep_checkpoints);
      for (const auto& p : res.points)
        std::printf("%s=%g rl %.4f myopic %.4f random %.4f\n", config::to_string(cfg.sweep.axis).c_str(), p.value,
                    p.success.at("rl"), p.success.at("myopic"), p.success.at("random"));
    } else if (demo->parsed()) {
      const auto cfg = resolve(demo_o);
      harness::run_signal_demo(cfg, cfg.output_dir);
      std::printf("spectra and eta_vs_inr.csv written to %s\n", cfg.output_dir.c_str());
    } else if (grad->parsed()) {
      const auto cfg = resolve(grad_o);
      const auto groups = harness::gradient_check(harness::reduced_shape(), 4, 5, cfg.seed);
      double worst = 0;
      std::string csv = harness::csv_preamble(config::hash(cfg), cfg.seed) + "group,count,max_rel_error\n";
      for (const auto& g : groups) {
        std::printf("%-18s %5zu  %.3e\n", g.name.c_str(), g.count, g.max_rel_error);
        csv += g.name + ',' + std::to_string(g.count) + ',' + io::num(g.max_rel_error) + '\n';
        worst = std::max(worst, g.max_rel_error);
      }
      io::write_file(std::filesystem::path(cfg.output_dir) / "gradcheck.csv", csv);
      std::printf("max relative error %.3e (limit 1e-4)\n", worst);
      return worst < 1e-4 ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
