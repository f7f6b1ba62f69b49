#pragma once

#include <cmath>
#include <vector>

#include "arrowbf/harness.hpp"
#include "arrowbf/synth.hpp"

namespace testutil {

// Independent O(n^2) DFT used as the transform oracle.
inline std::vector<arrowbf::cplx> naive_dft(const std::vector<double>& x, int nfft) {
  const int bins = nfft / 2 + 1;
  std::vector<arrowbf::cplx> out(bins, arrowbf::cplx(0.0, 0.0));
  for (int k = 0; k < bins; ++k)
    for (size_t n = 0; n < x.size(); ++n)
      out[k] += x[n] * std::polar(1.0, -2.0 * arrowbf::kPi * k * static_cast<double>(n) / nfft);
  return out;
}

// Backward-integration reverberation time: least-squares slope of the decay
// curve between -5 and -35 dB, extrapolated to -60.
inline double schroeder_t60(const std::vector<double>& h, double sample_rate) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  const double total = acc;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] <= 0.0) break;
    const double level = 10.0 * std::log10(edc[i] / total);
    if (level > -5.0 || level < -35.0) continue;
    const double t = static_cast<double>(i) / sample_rate;
    sx += t;
    sy += level;
    sxx += t * t;
    sxy += t * level;
    ++n;
  }
  if (n < 2) return 0.0;
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);  // dB per second
  return slope < 0.0 ? -60.0 / slope : 0.0;
}

struct TestScene {
  arrowbf::SceneSample scene;
  arrowbf::ArrayGeometry array;
  arrowbf::RoomSpec room;
  arrowbf::WindowSpec spec;
};

inline TestScene make_test_scene(uint64_t seed, double t60 = 0.0, double duration_s = 1.0,
                                 double sir_db = 0.0, double snr_db = 25.0) {
  using namespace arrowbf;
  TestScene out;
  out.room.t60 = t60;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  out.array = ArrayGeometry::ula(4, 0.08, center);

  Rng rng(seed);
  ScenePlacementConfig placement;
  const auto [target_p, interferer_p] = sample_scene(rng, placement, out.room, center);
  const std::vector<double> target = make_speech_like(rng, 16000.0, duration_s, 0.6 * duration_s);
  const std::vector<double> interferer = make_chirp_interferer(rng, 16000.0, duration_s);
  const ImpulseResponse rir_s = generate_rir(out.room, target_p, out.array, 16000.0);
  const ImpulseResponse rir_n = generate_rir(out.room, interferer_p, out.array, 16000.0);

  MixtureOptions mix;
  mix.sir_db = sir_db;
  mix.snr_db = snr_db;
  mix.seed = seed;
  out.scene = synthesize_mixture(target, interferer, rir_s, rir_n, 0, out.spec, mix);
  out.scene.target_placement = target_p;
  out.scene.interferer_placement = interferer_p;
  out.scene.t60 = t60;
  return out;
}

}  // namespace testutil
