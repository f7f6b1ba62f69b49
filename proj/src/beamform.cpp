#include "arrowbf/beamform.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace arrowbf {

void BeamWeights::validate() const {
  if (num_bins <= 0 || num_mics <= 0 || num_frames <= 0)
    throw std::invalid_argument("beam weights: empty dimensions");
  if (!time_varying && num_frames != 1)
    throw std::invalid_argument("beam weights: shared weights must have one frame");
  if (values.size() != static_cast<size_t>(num_frames) * num_bins * num_mics)
    throw std::invalid_argument("beam weights: data size mismatch");
}

BeamWeights BeamWeights::shared(int bins, int mics) {
  BeamWeights w;
  w.num_bins = bins;
  w.num_mics = mics;
  w.num_frames = 1;
  w.time_varying = false;
  w.values.assign(static_cast<size_t>(bins) * mics, cplx(0.0, 0.0));
  return w;
}

BeamWeights BeamWeights::per_frame(int frames, int bins, int mics) {
  BeamWeights w;
  w.num_bins = bins;
  w.num_mics = mics;
  w.num_frames = frames;
  w.time_varying = true;
  w.values.assign(static_cast<size_t>(frames) * bins * mics, cplx(0.0, 0.0));
  return w;
}

BeamWeights BeamWeights::reference_selector(int bins, int mics, int reference) {
  if (reference < 0 || reference >= mics)
    throw std::invalid_argument("reference mic out of range");
  BeamWeights w = shared(bins, mics);
  for (int f = 0; f < bins; ++f) w.at(0, f, reference) = cplx(1.0, 0.0);
  return w;
}

BeamWeights BeamWeights::delay_and_sum(const TransferVector& steering) {
  const int bins = steering.num_bins();
  const int mics = steering.num_mics();
  if (bins == 0 || mics == 0) throw std::invalid_argument("empty steering vector");
  BeamWeights w = shared(bins, mics);
  for (int f = 0; f < bins; ++f)
    for (int m = 0; m < mics; ++m) w.at(0, f, m) = steering.values[f][m] / static_cast<double>(mics);
  return w;
}

BeamWeights BeamWeights::random_init(int bins, int mics, uint64_t seed, double scale) {
  BeamWeights w = shared(bins, mics);
  Rng rng(seed);
  for (auto& v : w.values) v = cplx(scale * rng.normal(), scale * rng.normal());
  return w;
}

Spectrogram apply_beamformer(const BeamWeights& weights, const Spectrogram& mixture) {
  weights.validate();
  mixture.validate();
  if (weights.num_bins != mixture.num_bins || weights.num_mics != mixture.num_channels)
    throw std::invalid_argument("apply_beamformer: dimension mismatch");
  if (weights.time_varying && weights.num_frames != mixture.num_frames)
    throw std::invalid_argument("apply_beamformer: frame mismatch");

  Spectrogram out;
  out.num_channels = 1;
  out.num_frames = mixture.num_frames;
  out.num_bins = mixture.num_bins;
  out.spec = mixture.spec;
  out.sample_rate = mixture.sample_rate;
  out.data.assign(static_cast<size_t>(out.num_frames) * out.num_bins, cplx(0.0, 0.0));

  for (int m = 0; m < mixture.num_channels; ++m)
    for (int l = 0; l < mixture.num_frames; ++l) {
      const cplx* y = mixture.row(m, l);
      cplx* s = out.row(0, l);
      for (int f = 0; f < mixture.num_bins; ++f) s[f] += std::conj(weights.get(l, f, m)) * y[f];
    }
  return out;
}

BeamWeights mvdr_oracle(const Spectrogram& mixture, const TransferVector& rtf_target,
                        const VadMask& vad, double loading_scale) {
  mixture.validate();
  if (loading_scale < 0.0) throw std::invalid_argument("mvdr: loading must be non-negative");
  const int bins = mixture.num_bins;
  const int mics = mixture.num_channels;
  if (rtf_target.num_bins() != bins || rtf_target.num_mics() != mics)
    throw std::invalid_argument("mvdr: transfer vector dimension mismatch");
  if (vad.frames() != mixture.num_frames)
    throw std::invalid_argument("mvdr: VAD frame count mismatch");
  const int absent = vad.absent_count();
  if (absent < 1) throw std::invalid_argument("mvdr: no noise-only frames to estimate the SCM");

  BeamWeights w = BeamWeights::shared(bins, mics);
  Eigen::MatrixXcd phi(mics, mics);
  Eigen::VectorXcd y(mics), rs(mics);

  for (int f = 0; f < bins; ++f) {
    phi.setZero();
    for (int l = 0; l < mixture.num_frames; ++l) {
      if (vad.active[l]) continue;
      for (int m = 0; m < mics; ++m) y(m) = mixture.at(m, l, f);
      phi.noalias() += y * y.adjoint();
    }
    phi /= static_cast<double>(absent);
    phi = 0.5 * (phi + phi.adjoint()).eval();  // force Hermitian
    const double loading = loading_scale * phi.trace().real() / mics;
    for (int m = 0; m < mics; ++m) phi(m, m) += loading;

    for (int m = 0; m < mics; ++m) rs(m) = rtf_target.values[f][m];
    const Eigen::VectorXcd x = phi.ldlt().solve(rs);
    const cplx denom = rs.dot(x);  // R_s^H Phi^{-1} R_s
    if (!x.allFinite() || !std::isfinite(std::abs(denom)) || std::abs(denom) < 1e-300)
      throw std::runtime_error("mvdr: singular noise covariance even after loading");
    for (int m = 0; m < mics; ++m) w.at(0, f, m) = x(m) / denom;
  }
  return w;
}

DistortionlessReport distortionless_residual(const BeamWeights& weights,
                                             const TransferVector& rtf_target, double eta,
                                             const VadMask* vad) {
  weights.validate();
  const int bins = weights.num_bins;
  const int mics = weights.num_mics;
  if (rtf_target.num_bins() != bins || rtf_target.num_mics() != mics)
    throw std::invalid_argument("distortionless_residual: dimension mismatch");

  DistortionlessReport report;
  report.residual_per_bin.assign(bins, 0.0);

  if (!weights.time_varying) {
    for (int f = 0; f < bins; ++f) {
      cplx z(0.0, 0.0);
      for (int m = 0; m < mics; ++m) z += std::conj(weights.get(0, f, m)) * rtf_target.values[f][m];
      report.residual_per_bin[f] = std::abs(z - eta);
    }
  } else {
    if (vad == nullptr || vad->frames() != weights.num_frames)
      throw std::invalid_argument("distortionless_residual: time-varying weights need a VAD");
    const int present = vad->present_count();
    if (present < 1) throw std::invalid_argument("distortionless_residual: no active frames");
    for (int f = 0; f < bins; ++f) {
      double acc = 0.0;
      for (int l = 0; l < weights.num_frames; ++l) {
        if (!vad->active[l]) continue;
        cplx z(0.0, 0.0);
        for (int m = 0; m < mics; ++m) z += std::conj(weights.get(l, f, m)) * rtf_target.values[f][m];
        acc += std::abs(z - eta);
      }
      report.residual_per_bin[f] = acc / present;
    }
  }

  double sum = 0.0, peak = 0.0;
  for (double r : report.residual_per_bin) {
    sum += r;
    peak = std::max(peak, r);
  }
  report.mean_residual = sum / bins;
  report.max_residual = peak;
  return report;
}

namespace {

const char* window_kind_name(WindowKind kind) {
  switch (kind) {
    case WindowKind::kHamming: return "hamming";
    case WindowKind::kHann: return "hann";
    case WindowKind::kRect: return "rect";
  }
  return "hamming";
}

WindowKind window_kind_from_name(const std::string& name) {
  if (name == "hamming") return WindowKind::kHamming;
  if (name == "hann") return WindowKind::kHann;
  if (name == "rect") return WindowKind::kRect;
  throw std::invalid_argument("unknown window kind: " + name);
}

}  // namespace

void save_weights(const std::string& path, const BeamWeights& weights, const WindowSpec& spec,
                  double sample_rate) {
  weights.validate();
  nlohmann::json j;
  j["type"] = "beam_weights";
  j["num_mics"] = weights.num_mics;
  j["num_bins"] = weights.num_bins;
  j["num_frames"] = weights.num_frames;
  j["time_varying"] = weights.time_varying;
  j["sample_rate"] = sample_rate;
  j["window"] = {{"window_length", spec.window_length},
                 {"hop_length", spec.hop_length},
                 {"fft_size", spec.fft_size},
                 {"kind", window_kind_name(spec.window_kind)}};
  std::vector<double> flat;
  flat.reserve(weights.values.size() * 2);
  for (const cplx& v : weights.values) {
    flat.push_back(v.real());
    flat.push_back(v.imag());
  }
  j["values"] = std::move(flat);

  namespace fs = std::filesystem;
  const fs::path tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
    f << j.dump();
  }
  fs::rename(tmp, path);
}

BeamWeights load_weights(const std::string& path, WindowSpec* spec_out, double* sample_rate_out) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open weights file: " + path);
  nlohmann::json j;
  f >> j;
  if (j.value("type", "") != "beam_weights")
    throw std::runtime_error("not a beam weights file: " + path);

  BeamWeights w;
  w.num_mics = j.at("num_mics").get<int>();
  w.num_bins = j.at("num_bins").get<int>();
  w.num_frames = j.at("num_frames").get<int>();
  w.time_varying = j.at("time_varying").get<bool>();
  const auto flat = j.at("values").get<std::vector<double>>();
  if (flat.size() != static_cast<size_t>(w.num_frames) * w.num_bins * w.num_mics * 2)
    throw std::runtime_error("weights file size mismatch: " + path);
  w.values.resize(flat.size() / 2);
  for (size_t i = 0; i < w.values.size(); ++i) w.values[i] = cplx(flat[2 * i], flat[2 * i + 1]);
  w.validate();

  if (spec_out != nullptr) {
    const auto& jw = j.at("window");
    spec_out->window_length = jw.at("window_length").get<int>();
    spec_out->hop_length = jw.at("hop_length").get<int>();
    spec_out->fft_size = jw.at("fft_size").get<int>();
    spec_out->window_kind = window_kind_from_name(jw.at("kind").get<std::string>());
  }
  if (sample_rate_out != nullptr) *sample_rate_out = j.at("sample_rate").get<double>();
  return w;
}

}  // namespace arrowbf
