#include "arrowbf/stft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>

namespace arrowbf {

void WindowSpec::validate() const {
  if (window_length <= 0 || hop_length <= 0 || fft_size <= 0)
    throw std::invalid_argument("window spec: lengths must be positive");
  if (hop_length > window_length)
    throw std::invalid_argument("window spec: hop_length must not exceed window_length");
  if (window_length > fft_size)
    throw std::invalid_argument("window spec: window_length must not exceed fft_size");
}

void MultichannelWaveform::validate() const {
  if (channels.empty()) throw std::invalid_argument("waveform: no channels");
  if (sample_rate <= 0) throw std::invalid_argument("waveform: sample_rate must be positive");
  for (const auto& ch : channels)
    if (ch.size() != channels[0].size())
      throw std::invalid_argument("waveform: channels differ in length");
}

void Spectrogram::validate() const {
  spec.validate();
  if (num_channels <= 0 || num_frames <= 0 || num_bins <= 0)
    throw std::invalid_argument("spectrogram: empty dimensions");
  if (num_bins != spec.num_bins())
    throw std::invalid_argument("spectrogram: bin count inconsistent with fft_size");
  if (data.size() != static_cast<size_t>(num_channels) * num_frames * num_bins)
    throw std::invalid_argument("spectrogram: data size mismatch");
}

int frame_count(size_t signal_length, const WindowSpec& spec) {
  spec.validate();
  if (signal_length < static_cast<size_t>(spec.window_length))
    throw std::invalid_argument("signal too short");
  return static_cast<int>((signal_length - spec.window_length) / spec.hop_length) + 1;
}

std::vector<double> make_window(const WindowSpec& spec) {
  spec.validate();
  const int n = spec.window_length;
  std::vector<double> w(n, 1.0);
  switch (spec.window_kind) {
    case WindowKind::kHamming:
      for (int i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / n);
      break;
    case WindowKind::kHann:
      for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
      break;
    case WindowKind::kRect:
      break;
  }
  return w;
}

std::vector<double> synthesis_norm(const WindowSpec& spec, int num_frames) {
  if (num_frames < 1) throw std::invalid_argument("synthesis_norm: need at least one frame");
  const std::vector<double> w = make_window(spec);
  const size_t total = static_cast<size_t>(num_frames - 1) * spec.hop_length + spec.window_length;
  std::vector<double> den(total, 0.0);
  for (int l = 0; l < num_frames; ++l) {
    const size_t off = static_cast<size_t>(l) * spec.hop_length;
    for (int n = 0; n < spec.window_length; ++n) den[off + n] += w[n] * w[n];
  }
  return den;
}

namespace fft {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// FFTW plan pair with dedicated aligned buffers; planning is serialized
// (the FFTW planner is not thread-safe), execution is per-thread.
struct PlanSet {
  int n = 0;
  double* real_buf = nullptr;
  fftw_complex* cplx_buf = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  explicit PlanSet(int size) : n(size) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    real_buf = fftw_alloc_real(n);
    cplx_buf = fftw_alloc_complex(n / 2 + 1);
    // FFTW_ESTIMATE keeps plan selection deterministic run to run.
    fwd = fftw_plan_dft_r2c_1d(n, real_buf, cplx_buf, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(n, cplx_buf, real_buf, FFTW_ESTIMATE);
    if (real_buf == nullptr || cplx_buf == nullptr || fwd == nullptr || inv == nullptr)
      throw std::runtime_error("fftw plan creation failed");
  }
  ~PlanSet() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    if (real_buf) fftw_free(real_buf);
    if (cplx_buf) fftw_free(cplx_buf);
  }
  PlanSet(const PlanSet&) = delete;
  PlanSet& operator=(const PlanSet&) = delete;
};

PlanSet& plans_for(int n) {
  thread_local std::map<int, std::unique_ptr<PlanSet>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<PlanSet>(n);
  return *slot;
}

}  // namespace

void rfft(const double* in, cplx* out, int n) {
  PlanSet& p = plans_for(n);
  std::memcpy(p.real_buf, in, sizeof(double) * n);
  fftw_execute(p.fwd);
  const int bins = n / 2 + 1;
  for (int i = 0; i < bins; ++i) out[i] = cplx(p.cplx_buf[i][0], p.cplx_buf[i][1]);
}

void irfft(const cplx* in, double* out, int n) {
  PlanSet& p = plans_for(n);
  const int bins = n / 2 + 1;
  for (int i = 0; i < bins; ++i) {
    p.cplx_buf[i][0] = in[i].real();
    p.cplx_buf[i][1] = in[i].imag();
  }
  // Pin the semantics: the conjugate-symmetric extension of a real signal has
  // purely real DC and Nyquist terms.
  p.cplx_buf[0][1] = 0.0;
  if (n % 2 == 0) p.cplx_buf[bins - 1][1] = 0.0;
  fftw_execute(p.inv);
  const double scale = 1.0 / n;
  for (int i = 0; i < n; ++i) out[i] = p.real_buf[i] * scale;
}

}  // namespace fft

Spectrogram stft(const MultichannelWaveform& x, const WindowSpec& spec) {
  x.validate();
  const int frames = frame_count(x.num_samples(), spec);
  const int bins = spec.num_bins();
  const int m_channels = x.num_channels();
  const std::vector<double> w = make_window(spec);

  Spectrogram out;
  out.num_channels = m_channels;
  out.num_frames = frames;
  out.num_bins = bins;
  out.spec = spec;
  out.sample_rate = x.sample_rate;
  out.data.resize(static_cast<size_t>(m_channels) * frames * bins);

  std::vector<double> frame(spec.fft_size, 0.0);
  for (int m = 0; m < m_channels; ++m) {
    const double* sig = x.channels[m].data();
    for (int l = 0; l < frames; ++l) {
      const size_t off = static_cast<size_t>(l) * spec.hop_length;
      for (int n = 0; n < spec.window_length; ++n) frame[n] = sig[off + n] * w[n];
      // zero padding beyond the window persists from initialization
      fft::rfft(frame.data(), out.row(m, l), spec.fft_size);
    }
  }
  return out;
}

MultichannelWaveform istft(const Spectrogram& X) {
  X.validate();
  const WindowSpec& spec = X.spec;
  const int frames = X.num_frames;
  const std::vector<double> w = make_window(spec);
  const std::vector<double> den = synthesis_norm(spec, frames);
  const size_t total = den.size();

  MultichannelWaveform out;
  out.sample_rate = X.sample_rate;
  out.channels.assign(X.num_channels, std::vector<double>(total, 0.0));

  std::vector<double> tbuf(spec.fft_size);
  for (int m = 0; m < X.num_channels; ++m) {
    std::vector<double>& y = out.channels[m];
    for (int l = 0; l < frames; ++l) {
      fft::irfft(X.row(m, l), tbuf.data(), spec.fft_size);
      const size_t off = static_cast<size_t>(l) * spec.hop_length;
      for (int n = 0; n < spec.window_length; ++n) y[off + n] += w[n] * tbuf[n];
    }
    for (size_t i = 0; i < total; ++i) y[i] = den[i] > 1e-12 ? y[i] / den[i] : 0.0;
  }
  return out;
}

}  // namespace arrowbf
