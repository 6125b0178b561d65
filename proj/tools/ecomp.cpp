#include "ecomp/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

int dispatch(const std::string& mode, const std::string& config_path,
             std::optional<uint64_t> seed, std::optional<std::string> out_dir) {
  using namespace ecomp;
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot read config " << config_path << "\n";
    return 2;
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config JSON: " << e.what() << "\n";
    return 2;
  }
  try {
    harness::ExperimentConfig cfg = j.get<harness::ExperimentConfig>();
    cfg.mode = mode;
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    harness::RunResult rr = harness::run(cfg);
    if (mode == "sample" || mode == "eval") {
      std::cout << "correct_instances=" << rr.correct_instances
                << " metric_mean=" << rr.metric_mean << " metric_std=" << rr.metric_std
                << "\n";
    }
    std::cout << "done: " << cfg.out_dir << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional energy-based reasoning: train, compose, sample"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;

  for (const std::string mode : {"train", "finetune", "sample", "eval", "gen", "sweep"}) {
    auto* sub = app.add_subcommand(mode);
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--out", out_dir, "output directory override");
  }

  CLI11_PARSE(app, argc, argv);
  return dispatch(app.get_subcommands().front()->get_name(), config_path, seed, out_dir);
}
