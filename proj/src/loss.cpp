#include "arrowbf/loss.hpp"

#include <algorithm>
#include <cmath>

namespace arrowbf {
namespace {

constexpr double kDbScale = 10.0 / 2.302585092994046;  // 10 / ln(10)

inline double sign_or_zero(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Loss bound reached for a perfectly reconstructed (or orthogonal) estimate.
double clamped_max_loss() { return 10.0 * std::log10((1.0 + kSiSnrEpsilon) / kSiSnrEpsilon); }

}  // namespace

std::pair<double, double> si_snr_loss(std::span<const double> estimate,
                                      std::span<const double> reference) {
  if (estimate.size() != reference.size())
    throw std::invalid_argument("si_snr_loss: length mismatch");
  if (estimate.empty()) throw std::invalid_argument("si_snr_loss: empty input");

  double rr = 0.0, ee = 0.0, er = 0.0;
  for (size_t i = 0; i < estimate.size(); ++i) {
    rr += reference[i] * reference[i];
    ee += estimate[i] * estimate[i];
    er += estimate[i] * reference[i];
  }
  if (rr <= 0.0) throw std::invalid_argument("si_snr_loss: zero reference");
  if (ee <= 0.0) return {clamped_max_loss(), 0.0};

  const double eta = er / rr;
  const double num = eta * eta * rr;
  double den = 0.0;
  for (size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - eta * reference[i];
    den += d * d;
  }
  // Relative floor: scaling the estimate scales num, den and ee alike, so the
  // loss is exactly scale invariant and bounded to +-10*log10((1+eps)/eps).
  const double num_f = num + kSiSnrEpsilon * ee;
  const double den_f = den + kSiSnrEpsilon * ee;
  return {-10.0 * std::log10(num_f / den_f), eta};
}

ArrowTerms arrow_loss(const BeamWeights& weights, const TransferVector& rtf_target,
                      const TransferVector& rtf_interferer, const VadMask& vad, double alpha) {
  weights.validate();
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  const int bins = weights.num_bins;
  const int mics = weights.num_mics;
  if (rtf_target.num_bins() != bins || rtf_interferer.num_bins() != bins ||
      rtf_target.num_mics() != mics || rtf_interferer.num_mics() != mics)
    throw std::invalid_argument("arrow_loss: transfer vector dimension mismatch");
  const int frames = vad.frames();
  if (frames <= 0) throw std::invalid_argument("arrow_loss: empty VAD");
  if (weights.time_varying && weights.num_frames != frames)
    throw std::invalid_argument("arrow_loss: weights frames do not match VAD");

  const int present = vad.present_count();
  const int absent = frames - present;

  double target_sum = 0.0, interferer_sum = 0.0;
  auto response = [&](const TransferVector& rtf, int l, int f) {
    cplx z(0.0, 0.0);
    const cplx* wrow = weights.values.data() + weights.index(l, f, 0);
    const std::vector<cplx>& r = rtf.values[f];
    for (int m = 0; m < mics; ++m) z += std::conj(wrow[m]) * r[m];
    return z;
  };

  if (!weights.time_varying) {
    // Shared weights: per-bin responses are frame independent, so the frame
    // sums collapse to multiplicities.
    for (int f = 0; f < bins; ++f) {
      if (present > 0) target_sum += std::abs(response(rtf_target, 0, f).imag()) * present;
      if (absent > 0) {
        const cplx zn = response(rtf_interferer, 0, f);
        interferer_sum += (std::abs(zn.real()) + std::abs(zn.imag())) * absent;
      }
    }
  } else {
    for (int l = 0; l < frames; ++l)
      for (int f = 0; f < bins; ++f) {
        if (vad.active[l]) {
          target_sum += std::abs(response(rtf_target, l, f).imag());
        } else {
          const cplx zn = response(rtf_interferer, l, f);
          interferer_sum += std::abs(zn.real()) + std::abs(zn.imag());
        }
      }
  }

  ArrowTerms terms;
  terms.target_term = present > 0 ? target_sum / (static_cast<double>(present) * bins) : 0.0;
  terms.interferer_term = absent > 0 ? interferer_sum / (static_cast<double>(absent) * bins) : 0.0;
  terms.loss = alpha * terms.target_term + (1.0 - alpha) * terms.interferer_term;
  return terms;
}

VadMask compute_vad(std::span<const double> clean_target, const WindowSpec& spec,
                    double threshold_db) {
  const int frames = frame_count(clean_target.size(), spec);
  std::vector<double> energy(frames, 0.0);
  double peak = 0.0;
  for (int l = 0; l < frames; ++l) {
    const size_t off = static_cast<size_t>(l) * spec.hop_length;
    double e = 0.0;
    for (int n = 0; n < spec.window_length; ++n) e += clean_target[off + n] * clean_target[off + n];
    energy[l] = e;
    peak = std::max(peak, e);
  }
  VadMask vad;
  vad.active.assign(frames, 0);
  if (peak > 0.0) {
    const double gate = peak * db_to_power(-threshold_db);
    for (int l = 0; l < frames; ++l) vad.active[l] = energy[l] > gate ? 1 : 0;
  }
  return vad;
}

SceneTensors SceneTensors::from_scene(const SceneSample& scene, const WindowSpec& spec) {
  SceneTensors t;
  t.mixture = stft(scene.mixture, spec);
  const size_t span = static_cast<size_t>(t.mixture.num_frames - 1) * spec.hop_length +
                      spec.window_length;
  t.clean_reference.assign(scene.clean_reference.begin(),
                           scene.clean_reference.begin() +
                               std::min(span, scene.clean_reference.size()));
  t.clean_reference.resize(span, 0.0);
  t.rtf_target = scene.rtf_target;
  t.rtf_interferer = scene.rtf_interferer;
  t.vad = scene.vad.frames() == t.mixture.num_frames
              ? scene.vad
              : compute_vad(scene.clean_reference, spec);
  return t;
}

void SceneTensors::validate() const {
  mixture.validate();
  if (rtf_target.num_bins() != mixture.num_bins || rtf_interferer.num_bins() != mixture.num_bins)
    throw std::invalid_argument("scene tensors: transfer vector bins mismatch");
  if (rtf_target.num_mics() != mixture.num_channels ||
      rtf_interferer.num_mics() != mixture.num_channels)
    throw std::invalid_argument("scene tensors: transfer vector mics mismatch");
  if (vad.frames() != mixture.num_frames)
    throw std::invalid_argument("scene tensors: VAD frame count mismatch");
  const size_t span = static_cast<size_t>(mixture.num_frames - 1) * mixture.spec.hop_length +
                      mixture.spec.window_length;
  if (clean_reference.size() != span)
    throw std::invalid_argument("scene tensors: clean reference span mismatch");
}

LossEngine::LossEngine(const SceneTensors& scene) : scene_(&scene) {
  scene.validate();
  frames_ = scene.mixture.num_frames;
  bins_ = scene.mixture.num_bins;
  mics_ = scene.mixture.num_channels;
  const WindowSpec& spec = scene.mixture.spec;
  win_ = spec.window_length;
  hop_ = spec.hop_length;
  nfft_ = spec.fft_size;
  window_ = make_window(spec);

  const std::vector<double> den = synthesis_norm(spec, frames_);
  synth_len_ = den.size();
  inv_norm_.resize(synth_len_);
  for (size_t i = 0; i < synth_len_; ++i) inv_norm_[i] = den[i] > 1e-12 ? 1.0 / den[i] : 0.0;

  reference_ = scene.clean_reference;
  reference_energy_ = 0.0;
  for (double v : reference_) reference_energy_ += v * v;

  beamformed_.resize(static_cast<size_t>(frames_) * bins_);
  spec_grad_.resize(static_cast<size_t>(frames_) * bins_);
  estimate_.resize(synth_len_);
  estimate_grad_.resize(synth_len_);
  frame_buf_.resize(nfft_, 0.0);
  bin_buf_.resize(bins_);
}

// Gradient conventions. For real loss L(W) with W complex, the packed gradient
// is G = dL/dRe{W} + j dL/dIm{W}; a step along complex direction E changes L
// by sum Re{conj(G) E}. Three pieces chain together:
//   (1) S_hat = W^H Y           => G_W = conj(G_S) * Y
//   (2) s_hat = WOLA(iFFT(S))   => G_S(l,k) = (c_k / nfft) * FFT(w .* u')[k],
//       u' = u / wola_norm, c_k = 2 except 1 at DC and Nyquist (the one-sided
//       bins without a conjugate partner; their Im parts never reach s_hat)
//   (3) the array-response terms act on W directly through z = W^H R:
//       d|Im z| = sign(Im z) * (-j R),  d|Re z| = sign(Re z) * R
// with the subgradient taken as 0 at |x| = 0.
LossBreakdown LossEngine::evaluate(const BeamWeights& weights, const LossWeights& loss_weights,
                                   std::vector<cplx>* grad) {
  loss_weights.validate();
  weights.validate();
  if (weights.num_bins != bins_ || weights.num_mics != mics_)
    throw std::invalid_argument("loss: weights do not match the scene dimensions");
  if (weights.time_varying && weights.num_frames != frames_)
    throw std::invalid_argument("loss: time-varying weights frame mismatch");
  const bool tv = weights.time_varying;
  const double alpha = loss_weights.alpha, beta = loss_weights.beta;

  if (grad != nullptr) grad->assign(weights.size(), cplx(0.0, 0.0));

  // beamform
  std::fill(beamformed_.begin(), beamformed_.end(), cplx(0.0, 0.0));
  for (int m = 0; m < mics_; ++m)
    for (int l = 0; l < frames_; ++l) {
      const cplx* y = scene_->mixture.row(m, l);
      const cplx* w = weights.values.data() +
                      static_cast<size_t>(tv ? l : 0) * bins_ * mics_ + m;
      cplx* out = beamformed_.data() + static_cast<size_t>(l) * bins_;
      for (int f = 0; f < bins_; ++f) out[f] += std::conj(w[static_cast<size_t>(f) * mics_]) * y[f];
    }

  // synthesize the estimate
  std::fill(estimate_.begin(), estimate_.end(), 0.0);
  for (int l = 0; l < frames_; ++l) {
    fft::irfft(beamformed_.data() + static_cast<size_t>(l) * bins_, frame_buf_.data(), nfft_);
    double* y = estimate_.data() + static_cast<size_t>(l) * hop_;
    for (int n = 0; n < win_; ++n) y[n] += window_[n] * frame_buf_[n];
  }
  for (size_t i = 0; i < synth_len_; ++i) estimate_[i] *= inv_norm_[i];

  // si-snr
  LossBreakdown breakdown;
  double ee = 0.0, er = 0.0;
  for (size_t i = 0; i < synth_len_; ++i) {
    ee += estimate_[i] * estimate_[i];
    er += estimate_[i] * reference_[i];
  }
  if (reference_energy_ <= 0.0) throw std::invalid_argument("loss: zero clean reference");

  double eta = 0.0, num_f = 0.0, den_f = 0.0;
  if (ee <= 0.0) {
    breakdown.si_snr_loss = clamped_max_loss();
  } else {
    eta = er / reference_energy_;
    const double num = eta * eta * reference_energy_;
    double den = 0.0;
    for (size_t i = 0; i < synth_len_; ++i) {
      const double d = estimate_[i] - eta * reference_[i];
      den += d * d;
    }
    num_f = num + kSiSnrEpsilon * ee;
    den_f = den + kSiSnrEpsilon * ee;
    breakdown.si_snr_loss = -10.0 * std::log10(num_f / den_f);
  }
  breakdown.eta = eta;

  // gradient of the si-snr part back to the weights
  if (grad != nullptr && beta > 0.0 && ee > 0.0) {
    for (size_t i = 0; i < synth_len_; ++i) {
      const double e = estimate_[i], r = reference_[i];
      const double dnum = 2.0 * eta * r + 2.0 * kSiSnrEpsilon * e;
      const double dden = 2.0 * (e - eta * r) + 2.0 * kSiSnrEpsilon * e;
      estimate_grad_[i] = -kDbScale * beta * (dnum / num_f - dden / den_f) * inv_norm_[i];
    }
    const double dc_scale = 1.0 / nfft_;
    const double mid_scale = 2.0 / nfft_;
    const bool has_nyquist = nfft_ % 2 == 0;
    for (int l = 0; l < frames_; ++l) {
      const size_t off = static_cast<size_t>(l) * hop_;
      for (int n = 0; n < win_; ++n) frame_buf_[n] = window_[n] * estimate_grad_[off + n];
      std::fill(frame_buf_.begin() + win_, frame_buf_.end(), 0.0);
      fft::rfft(frame_buf_.data(), bin_buf_.data(), nfft_);
      cplx* g = spec_grad_.data() + static_cast<size_t>(l) * bins_;
      for (int k = 0; k < bins_; ++k) {
        const bool lone = k == 0 || (has_nyquist && k == bins_ - 1);
        g[k] = bin_buf_[k] * (lone ? dc_scale : mid_scale);
      }
    }
    for (int m = 0; m < mics_; ++m)
      for (int l = 0; l < frames_; ++l) {
        const cplx* y = scene_->mixture.row(m, l);
        const cplx* g = spec_grad_.data() + static_cast<size_t>(l) * bins_;
        cplx* gw = grad->data() + static_cast<size_t>(tv ? l : 0) * bins_ * mics_ + m;
        for (int f = 0; f < bins_; ++f) gw[static_cast<size_t>(f) * mics_] += std::conj(g[f]) * y[f];
      }
  }

  // array-response terms
  const int present = scene_->vad.present_count();
  const int absent = frames_ - present;
  double target_sum = 0.0, interferer_sum = 0.0;
  const double arrow_w = 1.0 - beta;

  if (!tv) {
    const double ct = present > 0 ? alpha / bins_ : 0.0;
    const double ci = absent > 0 ? (1.0 - alpha) / bins_ : 0.0;
    for (int f = 0; f < bins_; ++f) {
      const cplx* w = weights.values.data() + static_cast<size_t>(f) * mics_;
      const std::vector<cplx>& rs = scene_->rtf_target.values[f];
      const std::vector<cplx>& rn = scene_->rtf_interferer.values[f];
      cplx zs(0.0, 0.0), zn(0.0, 0.0);
      for (int m = 0; m < mics_; ++m) {
        zs += std::conj(w[m]) * rs[m];
        zn += std::conj(w[m]) * rn[m];
      }
      if (present > 0) target_sum += std::abs(zs.imag()) * present;
      if (absent > 0) interferer_sum += (std::abs(zn.real()) + std::abs(zn.imag())) * absent;
      if (grad != nullptr && arrow_w > 0.0) {
        const double ss = sign_or_zero(zs.imag());
        const double sr = sign_or_zero(zn.real());
        const double si = sign_or_zero(zn.imag());
        cplx* gw = grad->data() + static_cast<size_t>(f) * mics_;
        for (int m = 0; m < mics_; ++m) {
          // -j R flips (re, im) to (im, -re)
          const cplx djim_s(rs[m].imag(), -rs[m].real());
          const cplx djim_n(rn[m].imag(), -rn[m].real());
          gw[m] += arrow_w * (ct * ss * djim_s + ci * (sr * rn[m] + si * djim_n));
        }
      }
    }
  } else {
    const double ct = present > 0 ? alpha / (static_cast<double>(present) * bins_) : 0.0;
    const double ci = absent > 0 ? (1.0 - alpha) / (static_cast<double>(absent) * bins_) : 0.0;
    for (int l = 0; l < frames_; ++l) {
      const bool act = scene_->vad.active[l] != 0;
      for (int f = 0; f < bins_; ++f) {
        const cplx* w = weights.values.data() + (static_cast<size_t>(l) * bins_ + f) * mics_;
        const std::vector<cplx>& r =
            act ? scene_->rtf_target.values[f] : scene_->rtf_interferer.values[f];
        cplx z(0.0, 0.0);
        for (int m = 0; m < mics_; ++m) z += std::conj(w[m]) * r[m];
        if (act)
          target_sum += std::abs(z.imag());
        else
          interferer_sum += std::abs(z.real()) + std::abs(z.imag());
        if (grad != nullptr && arrow_w > 0.0) {
          cplx* gw = grad->data() + (static_cast<size_t>(l) * bins_ + f) * mics_;
          if (act) {
            const double ss = sign_or_zero(z.imag());
            for (int m = 0; m < mics_; ++m)
              gw[m] += arrow_w * ct * ss * cplx(r[m].imag(), -r[m].real());
          } else {
            const double sr = sign_or_zero(z.real());
            const double si = sign_or_zero(z.imag());
            for (int m = 0; m < mics_; ++m)
              gw[m] += arrow_w * ci * (sr * r[m] + si * cplx(r[m].imag(), -r[m].real()));
          }
        }
      }
    }
  }

  breakdown.arrow_target_term =
      present > 0 ? target_sum / (static_cast<double>(present) * bins_) : 0.0;
  breakdown.arrow_interferer_term =
      absent > 0 ? interferer_sum / (static_cast<double>(absent) * bins_) : 0.0;
  breakdown.arrow_loss = alpha * breakdown.arrow_target_term +
                         (1.0 - alpha) * breakdown.arrow_interferer_term;
  breakdown.combined = beta * breakdown.si_snr_loss + (1.0 - beta) * breakdown.arrow_loss;
  return breakdown;
}

LossBreakdown combined_loss(const SceneTensors& scene, const BeamWeights& weights,
                            const LossWeights& loss_weights) {
  LossEngine engine(scene);
  return engine.evaluate(weights, loss_weights);
}

BeamWeights grad_combined_loss(const SceneTensors& scene, const BeamWeights& weights,
                               const LossWeights& loss_weights, LossBreakdown* breakdown) {
  LossEngine engine(scene);
  std::vector<cplx> g;
  const LossBreakdown b = engine.evaluate(weights, loss_weights, &g);
  if (breakdown != nullptr) *breakdown = b;
  BeamWeights out = weights;
  out.values = std::move(g);
  return out;
}

}  // namespace arrowbf
