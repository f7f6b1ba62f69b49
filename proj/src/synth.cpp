#include "arrowbf/synth.hpp"

#include <algorithm>
#include <cmath>

namespace arrowbf {
namespace {

void normalize_rms(std::vector<double>& x, size_t begin, size_t end, double target_rms) {
  double p = 0.0;
  for (size_t i = begin; i < end; ++i) p += x[i] * x[i];
  p /= std::max<size_t>(end - begin, 1);
  if (p <= 0.0) return;
  const double g = target_rms / std::sqrt(p);
  for (size_t i = begin; i < end; ++i) x[i] *= g;
}

}  // namespace

std::vector<double> make_speech_like(Rng& rng, double sample_rate, double duration_s,
                                     double active_s, int* insert_start) {
  const size_t total = static_cast<size_t>(std::llround(duration_s * sample_rate));
  size_t active = static_cast<size_t>(std::llround(active_s * sample_rate));
  active = std::min(active, total);
  const size_t slack = total - active;
  const size_t start = slack > 0 ? static_cast<size_t>(rng.uniform_int(slack + 1)) : 0;

  std::vector<double> x(total, 0.0);

  // Two-pole lowpass around 500 Hz gives the noise a speech-like spectral tilt.
  const double f0 = 500.0 / sample_rate;
  const double r = 0.97;
  const double a1 = -2.0 * r * std::cos(2.0 * kPi * f0);
  const double a2 = r * r;
  double y1 = 0.0, y2 = 0.0;

  const double mod_rate = rng.uniform(2.5, 4.5);  // syllabic
  const double mod_phase = rng.uniform(0.0, 2.0 * kPi);
  const size_t ramp = static_cast<size_t>(0.01 * sample_rate);

  for (size_t i = 0; i < active; ++i) {
    const double w = rng.normal();
    const double y = w - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    const double t = static_cast<double>(i) / sample_rate;
    double env = 0.7 + 0.3 * std::sin(2.0 * kPi * mod_rate * t + mod_phase);
    if (i < ramp) env *= 0.5 * (1.0 - std::cos(kPi * i / ramp));
    if (active - i <= ramp) env *= 0.5 * (1.0 - std::cos(kPi * (active - i) / ramp));
    x[start + i] = y * env;
  }
  normalize_rms(x, start, start + active, 0.1);
  if (insert_start != nullptr) *insert_start = static_cast<int>(start);
  return x;
}

std::vector<double> make_chirp_interferer(Rng& rng, double sample_rate, double duration_s) {
  const size_t total = static_cast<size_t>(std::llround(duration_s * sample_rate));
  std::vector<double> x(total, 0.0);

  const int num_chirps = 3;
  for (int c = 0; c < num_chirps; ++c) {
    const double f_lo = rng.uniform(300.0, 1500.0);
    const double f_hi = rng.uniform(f_lo + 200.0, 4000.0);
    const double phase0 = rng.uniform(0.0, 2.0 * kPi);
    const double amp = rng.uniform(0.4, 1.0);
    const bool up = rng.uniform() < 0.5;
    for (size_t i = 0; i < total; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double frac = static_cast<double>(i) / total;
      const double f = up ? f_lo + (f_hi - f_lo) * frac : f_hi - (f_hi - f_lo) * frac;
      // instantaneous frequency sweep integrated in closed form
      const double sweep = (up ? 1.0 : -1.0) * (f_hi - f_lo) / (2.0 * duration_s);
      x[i] += amp * std::sin(phase0 + 2.0 * kPi * ((up ? f_lo : f_hi) * t + sweep * t * t));
      (void)f;
    }
  }
  const double tone = rng.uniform(600.0, 900.0);
  const double tone_phase = rng.uniform(0.0, 2.0 * kPi);
  for (size_t i = 0; i < total; ++i)
    x[i] += 0.5 * std::sin(tone_phase + 2.0 * kPi * tone * i / sample_rate);

  normalize_rms(x, 0, total, 0.1);
  return x;
}

}  // namespace arrowbf
