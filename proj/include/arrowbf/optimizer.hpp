#pragma once

#include "arrowbf/loss.hpp"

namespace arrowbf {

enum class WeightsInit { kReferenceSelector, kDelayAndSum, kRandom };

struct OptimizerConfig {
  double learning_rate = 0.001;
  int max_iters = 500;
  double beta1 = 0.9, beta2 = 0.999;
  double epsilon = 1e-8;
  WeightsInit init = WeightsInit::kReferenceSelector;
  double init_angle_deg = 90.0;  // for delay-and-sum init
  uint64_t init_seed = 0;        // for random init
  double alpha = 0.5, beta = 0.5;
  bool time_varying = false;     // one weight vector per frame instead of shared
  double early_stop_delta = 1e-6;
  int early_stop_patience = 25;

  void validate() const;
};

struct OptimizeResult {
  BeamWeights weights;             // best iterate seen
  std::vector<double> loss_trace;  // combined loss at every evaluated iterate
  std::vector<double> si_snr_trace;
  std::vector<double> arrow_trace;
  double best_loss = 0.0;
  int best_iteration = 0;
  LossBreakdown best_breakdown;
};

// Adam over the real and imaginary parts of the weights against the combined
// loss. Deterministic for a given scene and config; aborts on non-finite loss
// or gradient.
OptimizeResult optimize_weights(const SceneTensors& tensors, const OptimizerConfig& config,
                                const BeamWeights& initial);

// Convenience wrapper that builds the initial weights per config.init; the
// array geometry is only needed for the delay-and-sum init.
OptimizeResult optimize_weights(const SceneSample& scene, const OptimizerConfig& config,
                                const WindowSpec& spec, const ArrayGeometry* array = nullptr);

}  // namespace arrowbf
