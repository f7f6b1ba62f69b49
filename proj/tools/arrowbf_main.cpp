// Command-line front end: scene simulation, enhancement, localization, batch
// evaluation and the gradient self-check. Exit codes: 0 success, 1 usage or
// configuration error, 2 runtime/numerical failure.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "arrowbf/harness.hpp"

namespace fs = std::filesystem;
using namespace arrowbf;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool seed_set = false;
  double alpha = 0.5, beta = 0.5;
  bool alpha_set = false, beta_set = false;
  std::string grid = "fine";
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON experiment config");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--seed", flags.seed, "master seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--alpha", flags.alpha, "target/interferer weighting in [0,1]")
      ->each([&](const std::string&) { flags.alpha_set = true; });
  cmd->add_option("--beta", flags.beta, "si-snr/array-response weighting in [0,1]")
      ->each([&](const std::string&) { flags.beta_set = true; });
  cmd->add_option("--grid", flags.grid, "DOA grid: fine|coarse")
      ->check(CLI::IsMember({"fine", "coarse"}));
  cmd->add_option("--workers", flags.workers, "scene-level worker threads");
}

ExperimentConfig build_config(const CommonFlags& flags) {
  ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = ExperimentConfig::from_file(flags.config_path);
  if (flags.seed_set) cfg.seed = flags.seed;
  if (flags.alpha_set) cfg.optimizer.alpha = flags.alpha;
  if (flags.beta_set) cfg.optimizer.beta = flags.beta;
  cfg.fine_grid = flags.grid != "coarse";
  if (flags.workers > 0) cfg.workers = flags.workers;
  cfg.validate();
  return cfg;
}

SceneFiles scene_files_from_arg(const std::string& arg) {
  // Accepts the sidecar path or the scene base path without extension.
  std::string sidecar = arg;
  if (fs::path(arg).extension() != ".json") sidecar = arg + ".json";
  SceneFiles files;
  files.sidecar = sidecar;
  const fs::path base = fs::path(sidecar).parent_path() / fs::path(sidecar).stem();
  files.id = fs::path(sidecar).stem().string();
  files.mixture_wav = base.string() + ".wav";
  files.target_wav = base.string() + "_target.wav";
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"array-response-aware beamforming toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* simulate = app.add_subcommand("simulate", "synthesize array scenes");
  add_common(simulate, flags);
  int count_override = -1;
  simulate->add_option("--count", count_override, "number of scenes");

  auto* enhance = app.add_subcommand("enhance", "optimize weights and write the enhanced signal");
  add_common(enhance, flags);
  std::vector<std::string> scene_args;
  enhance->add_option("--scene", scene_args, "scene sidecar (or base path); repeatable")
      ->required();
  int iters_override = -1;
  enhance->add_option("--iters", iters_override, "optimizer iteration cap");

  auto* localize = app.add_subcommand("localize", "estimate the target direction from weights");
  add_common(localize, flags);
  std::string weights_path, sidecar_path;
  localize->add_option("--weights", weights_path, "weights JSON file")->required();
  localize->add_option("--sidecar", sidecar_path, "scene sidecar JSON")->required();

  auto* evaluate = app.add_subcommand("evaluate", "batch metrics over a scene manifest");
  add_common(evaluate, flags);
  std::string manifest_path;
  bool with_baseline = false;
  evaluate->add_option("--manifest", manifest_path, "manifest.json from simulate")->required();
  evaluate->add_flag("--baseline", with_baseline, "add a beta=1 baseline column");

  auto* losscheck = app.add_subcommand("losscheck", "finite-difference gradient self-check");
  add_common(losscheck, flags);
  LosscheckOptions lc;
  losscheck->add_option("--scenes", lc.scenes, "number of random scenes");
  losscheck->add_option("--directions", lc.directions, "directions per scene");
  losscheck->add_flag("--inject-sign-flip", lc.inject_sign_flip,
                      "negative control: flip the analytic gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) {
      ExperimentConfig cfg = build_config(flags);
      if (count_override >= 0) cfg.scene_count = count_override;
      cfg.validate();
      const Manifest m = run_simulate(cfg, flags.out_dir);
      std::cout << "wrote " << m.scenes.size() << " scene(s) to " << flags.out_dir << '\n';
    } else if (enhance->parsed()) {
      ExperimentConfig cfg = build_config(flags);
      if (iters_override > 0) cfg.optimizer.max_iters = iters_override;
      cfg.validate();
      for (const std::string& arg : scene_args) {
        const EnhanceOutputs out = run_enhance(scene_files_from_arg(arg), cfg, flags.out_dir);
        std::cout << out.enhanced_wav << ": si-snr " << out.input_si_snr_db << " -> "
                  << out.output_si_snr_db << " dB (best loss " << out.result.best_loss
                  << " at iteration " << out.result.best_iteration << ")\n";
      }
    } else if (localize->parsed()) {
      const LocalizeOutputs out =
          run_localize(weights_path, sidecar_path, flags.grid != "coarse", flags.out_dir);
      std::cout << "theta_hat " << out.theta_hat << " deg";
      if (out.accuracy_pct.has_value()) std::cout << ", accuracy " << *out.accuracy_pct << "%";
      std::cout << " -> " << out.doa_json << '\n';
    } else if (evaluate->parsed()) {
      const ExperimentConfig cfg = build_config(flags);
      const MetricsReport report = run_evaluate(manifest_path, cfg, with_baseline, flags.out_dir);
      std::cout << "evaluated " << report.records.size() << " record(s), "
                << report.cells.size() << " condition cell(s) -> " << report.report_json << '\n';
    } else if (losscheck->parsed()) {
      const LosscheckReport report = run_losscheck(flags.seed_set ? flags.seed : 7, lc);
      print_losscheck(report, std::cout);
      return report.pass ? 0 : 2;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
