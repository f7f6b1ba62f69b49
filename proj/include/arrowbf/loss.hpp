#pragma once

#include <span>

#include "arrowbf/beamform.hpp"

namespace arrowbf {

// Bound on the scale-invariant loss magnitude; see si_snr_loss.
inline constexpr double kSiSnrEpsilon = 1e-8;

struct LossWeights {
  double alpha = 0.5;  // target vs interferer term inside the array-response loss
  double beta = 0.5;   // si-snr vs array-response weighting

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
      throw std::invalid_argument("loss weights must lie in [0, 1]");
  }
};

struct LossBreakdown {
  double si_snr_loss = 0.0;
  double arrow_target_term = 0.0;
  double arrow_interferer_term = 0.0;
  double arrow_loss = 0.0;
  double combined = 0.0;
  double eta = 0.0;
};

// Negative scale-invariant SNR in dB of the estimate against the reference,
// with eta = <s_hat, s> / ||s||^2. The epsilon floor is relative to ||s_hat||^2
// on both numerator and denominator, which keeps the loss exactly
// scale-invariant and bounds it to +-10*log10((1+eps)/eps). Returns
// (loss, eta); a zero estimate returns the clamped maximum with eta = 0.
std::pair<double, double> si_snr_loss(std::span<const double> estimate,
                                      std::span<const double> reference);

struct ArrowTerms {
  double loss = 0.0;
  double target_term = 0.0;
  double interferer_term = 0.0;
};

// Array-response loss: mean |Im{W^H R_s}| over speech-active frames and bins,
// plus mean (|Re{W^H R_n}| + |Im{W^H R_n}|) over speech-absent frames and
// bins, weighted alpha : (1 - alpha). A term whose frame set is empty
// contributes zero.
ArrowTerms arrow_loss(const BeamWeights& weights, const TransferVector& rtf_target,
                      const TransferVector& rtf_interferer, const VadMask& vad, double alpha);

// Frame active iff frame energy exceeds the maximum frame energy minus
// threshold_db; frames follow the analysis spec (no windowing).
VadMask compute_vad(std::span<const double> clean_target, const WindowSpec& spec,
                    double threshold_db = 40.0);

// T-F view of a scene, precomputed once so that repeated loss evaluations
// against different weights don't redo the analysis transform.
struct SceneTensors {
  Spectrogram mixture;
  std::vector<double> clean_reference;  // trimmed to the resynthesis span
  TransferVector rtf_target, rtf_interferer;
  VadMask vad;

  static SceneTensors from_scene(const SceneSample& scene, const WindowSpec& spec);
  void validate() const;
};

// Evaluates beta * L_sisnr + (1 - beta) * L_arrow for given weights, with the
// analytic gradient on request. Holds per-scene scratch so the optimizer inner
// loop is allocation-free.
class LossEngine {
 public:
  explicit LossEngine(const SceneTensors& scene);

  // grad, when non-null, receives the packed complex gradient
  // dL/dRe{W} + j dL/dIm{W} (steepest ascent of the real loss), conformal
  // with weights.values. Central finite differences over the real pairs
  // reproduce it.
  LossBreakdown evaluate(const BeamWeights& weights, const LossWeights& loss_weights,
                         std::vector<cplx>* grad = nullptr);

  int frames() const { return frames_; }
  int bins() const { return bins_; }
  int mics() const { return mics_; }
  size_t synthesis_length() const { return synth_len_; }

 private:
  const SceneTensors* scene_;
  int frames_, bins_, mics_;
  int win_, hop_, nfft_;
  size_t synth_len_;
  std::vector<double> window_, inv_norm_;  // WOLA normalization, inverted
  std::vector<double> reference_;          // clean reference over the synthesis span
  double reference_energy_;
  // scratch
  std::vector<cplx> beamformed_, spec_grad_;
  std::vector<double> estimate_, estimate_grad_, frame_buf_;
  std::vector<cplx> bin_buf_;
};

LossBreakdown combined_loss(const SceneTensors& scene, const BeamWeights& weights,
                            const LossWeights& loss_weights);

// Gradient packaged with the same shape/time-varying flag as the input.
BeamWeights grad_combined_loss(const SceneTensors& scene, const BeamWeights& weights,
                               const LossWeights& loss_weights,
                               LossBreakdown* breakdown = nullptr);

}  // namespace arrowbf
