#pragma once

#include <functional>
#include <iosfwd>

#include "arrowbf/localize.hpp"
#include "arrowbf/optimizer.hpp"
#include "arrowbf/scene_io.hpp"

namespace arrowbf {

// Everything a batch run needs; defaults match the standard evaluation setup.
struct ExperimentConfig {
  // room and array
  std::array<double, 3> room_dims{6.0, 5.0, 3.0};
  std::vector<double> t60_list{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  int num_mics = 4;
  double mic_spacing = 0.08;
  int reference_mic = 0;
  std::array<double, 3> array_center{3.0, 0.6, 1.5};
  int max_order = -1;
  double early_window_s = 0.016;

  // scene sampling
  ScenePlacementConfig placement;
  int scene_count = 4;
  double duration_s = 6.0;
  double insert_s = 4.0;
  double sample_rate = 16000.0;
  std::string source_dir;  // user WAV directory; empty = built-in synthetic sources

  // analysis and optimization
  WindowSpec stft;
  OptimizerConfig optimizer;
  std::vector<double> alpha_list;  // evaluate sweep; empty = {optimizer.alpha}
  std::vector<double> beta_list;

  // mixing
  std::vector<double> sir_list{-5.0, 0.0, 5.0, 10.0};
  std::vector<double> snr_list{20.0, 25.0, 30.0};
  double vad_threshold_db = 40.0;

  // run control
  uint64_t seed = 0;
  int workers = 1;
  bool fine_grid = true;

  void validate() const;
  static ExperimentConfig from_file(const std::string& path);
  std::string to_json_text() const;
};

Manifest run_simulate(const ExperimentConfig& config, const std::string& out_dir);

struct EnhanceOutputs {
  std::string enhanced_wav, weights_file, trace_csv;
  OptimizeResult result;
  double input_si_snr_db = 0.0;
  double output_si_snr_db = 0.0;
};

EnhanceOutputs run_enhance(const SceneFiles& files, const ExperimentConfig& config,
                           const std::string& out_dir);

struct LocalizeOutputs {
  std::string doa_json, beampattern_csv;
  double theta_hat = 0.0;
  std::optional<double> accuracy_pct;
};

LocalizeOutputs run_localize(const std::string& weights_path, const std::string& sidecar_path,
                             bool fine_grid, const std::string& out_dir);

struct SceneRecord {
  std::string scene_id;
  double alpha = 0.0, beta = 0.0;
  double sir_db = 0.0, snr_db = 0.0, t60 = 0.0;
  double input_si_snr_db = 0.0, output_si_snr_db = 0.0, improvement_db = 0.0;
  double residual_mean = 0.0;
  double doa_deg = 0.0, doa_error_deg = 0.0, accuracy_pct = 0.0;
  double combined_loss = 0.0;
  // baseline (beta = 1) columns; NaN when the baseline pass is off
  double baseline_output_si_snr_db, baseline_accuracy_pct, baseline_doa_error_deg;
  std::string error;  // non-empty marks a failed scene

  SceneRecord();
};

struct MetricsReport {
  struct Cell {
    double sir_db = 0.0, t60 = 0.0, alpha = 0.0, beta = 0.0;
    int count = 0;
    double mean_input_si_snr = 0.0, mean_output_si_snr = 0.0, mean_improvement = 0.0;
    double mean_accuracy = 0.0, mean_residual = 0.0;
    double mean_baseline_output_si_snr, mean_baseline_accuracy;

    Cell();
  };
  std::vector<SceneRecord> records;
  std::vector<Cell> cells;
  std::string report_json, report_csv, aggregates_csv;  // written file paths
};

MetricsReport run_evaluate(const std::string& manifest_path, const ExperimentConfig& config,
                           bool with_baseline, const std::string& out_dir);

struct LosscheckOptions {
  int scenes = 20;
  int directions = 20;
  double step = 1e-6;
  double tolerance = 1e-4;
  bool inject_sign_flip = false;  // negative-control hook
};

struct LosscheckReport {
  struct Row {
    int scene = 0;
    double rel_err_si = 0.0, rel_err_target = 0.0, rel_err_interferer = 0.0, rel_err_combined = 0.0;
  };
  std::vector<Row> rows;
  double worst = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Central-difference check of the analytic gradient on random scenes,
// separately for the si-snr, target, interferer and combined objectives.
LosscheckReport run_losscheck(uint64_t seed, const LosscheckOptions& options = {});
void print_losscheck(const LosscheckReport& report, std::ostream& os);

// Simple worker pool; tasks receive their own index, results must go into
// pre-sized slots so output order never depends on scheduling.
void run_parallel(int count, int workers, const std::function<void(int)>& fn);

}  // namespace arrowbf
