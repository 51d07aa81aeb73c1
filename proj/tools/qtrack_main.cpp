#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtrack/cli/runner.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "out";
  std::string checkpoint;
  std::string attn;
  std::vector<std::string> toggles;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* sc, bool with_checkpoint) {
    sc->add_option("--config", config_path, "experiment config file");
    sc->add_option("--out", out_dir, "output directory")
        ->capture_default_str();
    seed_opt = sc->add_option("--seed", seed, "seed override");
    sc->add_option("--toggle", toggles,
                   "module toggle, pqi|upd|hqd=on|off (repeatable)");
    sc->add_option("--attn", attn, "attention mode, det|prob")
        ->check(CLI::IsMember({"det", "prob"}));
    if (with_checkpoint)
      sc->add_option("--checkpoint", checkpoint,
                     "checkpoint to evaluate (omit for fresh weights)");
  }

  bool seed_given() const { return seed_opt && seed_opt->count() > 0; }

  qtrack::cli::ExperimentConfig load() const {
    qtrack::cli::ExperimentConfig cfg =
        config_path.empty() ? qtrack::cli::parse_config("")
                            : qtrack::cli::load_config(config_path);
    for (const std::string& t : toggles) qtrack::cli::apply_toggle(cfg, t);
    if (attn == "det") cfg.model.probabilistic = false;
    if (attn == "prob") cfg.model.probabilistic = true;
    return cfg;
  }
};

std::string f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-based 3d multi-object tracking on synthetic scenes"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, ablate_f, gen_f;

  CLI::App* train = app.add_subcommand("train", "optimize a tracker");
  train_f.attach(train, false);
  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_f.attach(evalc, true);
  CLI::App* ablate =
      app.add_subcommand("ablate", "train/eval every ablation cell");
  ablate_f.attach(ablate, false);
  CLI::App* gen = app.add_subcommand("genscene", "write a scenario as JSON");
  gen_f.attach(gen, false);
  CLI::App* gradc =
      app.add_subcommand("gradcheck", "finite-difference gradient spot checks");
  CLI::App* selft =
      app.add_subcommand("metrics-selftest", "hand-arithmetic metric fixtures");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gradc->parsed()) return qtrack::cli::run_gradcheck(std::cout);
    if (selft->parsed()) return qtrack::cli::run_metrics_selftest(std::cout);

    if (train->parsed()) {
      qtrack::cli::ExperimentConfig cfg = train_f.load();
      if (train_f.seed_given()) cfg.train.model_seed = train_f.seed;
      const auto res = qtrack::cli::run_train(cfg, train_f.out_dir);
      std::cout << "trained " << res.steps << " steps, loss "
                << f6(res.first_total) << " -> " << f6(res.last_total)
                << "\ncheckpoint: " << res.checkpoint_path << "\n";
      return 0;
    }
    if (evalc->parsed()) {
      qtrack::cli::ExperimentConfig cfg = eval_f.load();
      if (eval_f.seed_given()) cfg.eval.seeds = {eval_f.seed};
      const auto rep =
          qtrack::cli::run_eval(cfg, eval_f.checkpoint, eval_f.out_dir);
      std::cout << "amota " << f6(rep.amota) << "  mota " << f6(rep.mota)
                << "  recall " << f6(rep.recall) << "  latency "
                << f6(rep.latency) << "\nreport: " << eval_f.out_dir
                << "/report.txt\n";
      return 0;
    }
    if (ablate->parsed()) {
      qtrack::cli::ExperimentConfig cfg = ablate_f.load();
      if (ablate_f.seed_given()) cfg.train.model_seed = ablate_f.seed;
      const auto rows = qtrack::cli::run_ablate(cfg, ablate_f.out_dir);
      for (const auto& r : rows)
        std::cout << r.name << ": amota " << f6(r.report.amota) << "  mota "
                  << f6(r.report.mota) << "\n";
      std::cout << "table: " << ablate_f.out_dir << "/ablation.csv\n";
      return 0;
    }
    if (gen->parsed()) {
      qtrack::cli::ExperimentConfig cfg = gen_f.load();
      if (gen_f.seed_given()) cfg.scenario.seed = gen_f.seed;
      const auto sc = qtrack::scene::generate_scenario(cfg.scenario);
      namespace fs = std::filesystem;
      fs::create_directories(gen_f.out_dir);
      const fs::path path =
          fs::path(gen_f.out_dir) /
          ("scenario_" + std::to_string(cfg.scenario.seed) + ".json");
      std::ofstream out(path, std::ios::binary);
      if (!out)
        throw std::runtime_error("genscene: cannot write " + path.string());
      out << qtrack::scene::scenario_to_json(sc);
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
