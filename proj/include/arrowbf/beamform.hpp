#pragma once

#include <string>

#include "arrowbf/room.hpp"

namespace arrowbf {

// Per-frequency complex array weights; one weight frame shared across all
// signal frames unless time_varying.
struct BeamWeights {
  std::vector<cplx> values;  // [frame][bin][mic]
  bool time_varying = false;
  int num_frames = 1;  // weight frames; 1 when shared
  int num_bins = 0;
  int num_mics = 0;

  size_t size() const { return values.size(); }
  size_t index(int frame, int bin, int mic) const {
    return (static_cast<size_t>(time_varying ? frame : 0) * num_bins + bin) * num_mics + mic;
  }
  cplx get(int frame, int bin, int mic) const { return values[index(frame, bin, mic)]; }
  cplx& at(int frame, int bin, int mic) { return values[index(frame, bin, mic)]; }
  void validate() const;

  static BeamWeights shared(int bins, int mics);
  static BeamWeights per_frame(int frames, int bins, int mics);
  // Unit weight at the reference mic: the beamformer output starts as Y_ref.
  static BeamWeights reference_selector(int bins, int mics, int reference);
  // W = a / M for a steering (or any transfer) vector a.
  static BeamWeights delay_and_sum(const TransferVector& steering);
  static BeamWeights random_init(int bins, int mics, uint64_t seed, double scale = 0.1);
};

// S_hat(l, f) = sum_m conj(W_m(l, f)) * Y_m(l, f); single-channel output.
Spectrogram apply_beamformer(const BeamWeights& weights, const Spectrogram& mixture);

// Per-bin minimum-variance distortionless-response weights from the noise-only
// frames: W = Phi_n^{-1} R_s / (R_s^H Phi_n^{-1} R_s), with diagonal loading
// loading_scale * trace(Phi_n) / M. Time-invariant.
BeamWeights mvdr_oracle(const Spectrogram& mixture, const TransferVector& rtf_target,
                        const VadMask& vad, double loading_scale = 1e-6);

struct DistortionlessReport {
  std::vector<double> residual_per_bin;  // |W^H R_s - eta|
  double mean_residual = 0.0;
  double max_residual = 0.0;
};

// For time-varying weights the residual is averaged over speech-active frames,
// so a VAD is required in that case.
DistortionlessReport distortionless_residual(const BeamWeights& weights,
                                             const TransferVector& rtf_target, double eta,
                                             const VadMask* vad = nullptr);

// JSON tensor file with an (M, F, frames, window spec) header.
void save_weights(const std::string& path, const BeamWeights& weights, const WindowSpec& spec,
                  double sample_rate);
BeamWeights load_weights(const std::string& path, WindowSpec* spec_out = nullptr,
                         double* sample_rate_out = nullptr);

}  // namespace arrowbf
