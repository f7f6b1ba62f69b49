#pragma once

#include <vector>

#include "arrowbf/common.hpp"

namespace arrowbf {

enum class WindowKind { kHamming, kHann, kRect };

struct WindowSpec {
  int window_length = 400;  // 25 ms at 16 kHz
  int hop_length = 160;     // 10 ms
  int fft_size = 512;
  WindowKind window_kind = WindowKind::kHamming;

  int num_bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

struct MultichannelWaveform {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  int num_channels() const { return static_cast<int>(channels.size()); }
  size_t num_samples() const { return channels.empty() ? 0 : channels[0].size(); }
  void validate() const;
};

// One-sided complex spectrogram, indexed [channel][frame][bin].
struct Spectrogram {
  std::vector<cplx> data;
  int num_channels = 0;
  int num_frames = 0;
  int num_bins = 0;
  WindowSpec spec;
  double sample_rate = 16000.0;

  cplx& at(int ch, int frame, int bin) {
    return data[(static_cast<size_t>(ch) * num_frames + frame) * num_bins + bin];
  }
  cplx at(int ch, int frame, int bin) const {
    return data[(static_cast<size_t>(ch) * num_frames + frame) * num_bins + bin];
  }
  const cplx* row(int ch, int frame) const {
    return data.data() + (static_cast<size_t>(ch) * num_frames + frame) * num_bins;
  }
  cplx* row(int ch, int frame) {
    return data.data() + (static_cast<size_t>(ch) * num_frames + frame) * num_bins;
  }
  void validate() const;
};

// floor((signal_length - window_length) / hop_length) + 1; throws when the
// signal does not cover one window.
int frame_count(size_t signal_length, const WindowSpec& spec);

// Periodic analysis window.
std::vector<double> make_window(const WindowSpec& spec);

// Weighted-overlap-add denominator: sum of squared, hop-shifted windows over
// the reconstructed span of num_frames frames.
std::vector<double> synthesis_norm(const WindowSpec& spec, int num_frames);

// Frame l covers samples [l*hop, l*hop + window_length); frames are windowed
// and zero-padded to fft_size before the transform.
Spectrogram stft(const MultichannelWaveform& x, const WindowSpec& spec);

// Weighted overlap-add synthesis with the analysis window; reconstructs
// (num_frames-1)*hop + window_length samples. Exact on the interior for
// unmodified spectra.
MultichannelWaveform istft(const Spectrogram& X);

namespace fft {

// One-sided transforms of real length-n signals (n/2+1 bins). Forward is
// unnormalized; inverse carries the 1/n factor and uses only the real parts of
// the DC and Nyquist bins, i.e. the conjugate-symmetric extension of a real
// signal. Thread-safe; plans are cached per thread.
void rfft(const double* in, cplx* out, int n);
void irfft(const cplx* in, double* out, int n);

}  // namespace fft

}  // namespace arrowbf
