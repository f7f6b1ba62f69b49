#include "arrowbf/optimizer.hpp"

#include <cmath>

namespace arrowbf {

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("optimizer: learning_rate must be positive");
  if (max_iters < 1) throw std::invalid_argument("optimizer: max_iters must be at least 1");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("optimizer: adam betas must lie in [0, 1)");
  if (epsilon <= 0.0) throw std::invalid_argument("optimizer: epsilon must be positive");
  LossWeights{alpha, beta}.validate();
  if (early_stop_patience < 1) throw std::invalid_argument("optimizer: patience must be positive");
}

OptimizeResult optimize_weights(const SceneTensors& tensors, const OptimizerConfig& config,
                                const BeamWeights& initial) {
  config.validate();
  initial.validate();
  LossEngine engine(tensors);
  const LossWeights lw{config.alpha, config.beta};

  BeamWeights w = initial;
  const size_t n = w.size();
  std::vector<double> m1(2 * n, 0.0), m2(2 * n, 0.0);
  std::vector<cplx> grad;

  OptimizeResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  double stop_ref = std::numeric_limits<double>::infinity();
  int last_improvement = 0;

  for (int it = 0; it < config.max_iters; ++it) {
    const LossBreakdown br = engine.evaluate(w, lw, &grad);
    if (!std::isfinite(br.combined))
      throw std::runtime_error("optimizer: non-finite loss at iteration " + std::to_string(it));
    result.loss_trace.push_back(br.combined);
    result.si_snr_trace.push_back(br.si_snr_loss);
    result.arrow_trace.push_back(br.arrow_loss);

    if (br.combined < result.best_loss) {
      result.best_loss = br.combined;
      result.best_iteration = it;
      result.best_breakdown = br;
      result.weights = w;
    }
    if (br.combined < stop_ref - config.early_stop_delta) {
      stop_ref = br.combined;
      last_improvement = it;
    } else if (it - last_improvement >= config.early_stop_patience) {
      break;
    }

    // Adam over the real pairs; the packed complex gradient is exactly
    // (dL/dRe, dL/dIm).
    const int t = it + 1;
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    double grad_norm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double g[2] = {grad[i].real(), grad[i].imag()};
      grad_norm += g[0] * g[0] + g[1] * g[1];
      double upd[2];
      for (int c = 0; c < 2; ++c) {
        const size_t k = 2 * i + c;
        m1[k] = config.beta1 * m1[k] + (1.0 - config.beta1) * g[c];
        m2[k] = config.beta2 * m2[k] + (1.0 - config.beta2) * g[c] * g[c];
        upd[c] = config.learning_rate * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + config.epsilon);
      }
      w.values[i] -= cplx(upd[0], upd[1]);
    }
    if (!std::isfinite(grad_norm))
      throw std::runtime_error("optimizer: non-finite gradient at iteration " + std::to_string(it));
  }
  return result;
}

OptimizeResult optimize_weights(const SceneSample& scene, const OptimizerConfig& config,
                                const WindowSpec& spec, const ArrayGeometry* array) {
  const SceneTensors tensors = SceneTensors::from_scene(scene, spec);
  const int bins = tensors.mixture.num_bins;
  const int mics = tensors.mixture.num_channels;

  BeamWeights init;
  switch (config.init) {
    case WeightsInit::kReferenceSelector:
      init = BeamWeights::reference_selector(bins, mics, scene.reference_mic);
      break;
    case WeightsInit::kDelayAndSum: {
      if (array == nullptr)
        throw std::invalid_argument("delay-and-sum init needs the array geometry");
      init = BeamWeights::delay_and_sum(
          steering_vector(config.init_angle_deg, *array, spec, scene.sample_rate));
      break;
    }
    case WeightsInit::kRandom:
      init = BeamWeights::random_init(bins, mics, config.init_seed);
      break;
  }

  if (config.time_varying) {
    BeamWeights tv = BeamWeights::per_frame(tensors.mixture.num_frames, bins, mics);
    for (int l = 0; l < tv.num_frames; ++l)
      for (int f = 0; f < bins; ++f)
        for (int m = 0; m < mics; ++m) tv.at(l, f, m) = init.get(0, f, m);
    init = std::move(tv);
  }
  return optimize_weights(tensors, config, init);
}

}  // namespace arrowbf
