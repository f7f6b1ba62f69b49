#include <doctest.h>

#include "arrowbf/optimizer.hpp"
#include "test_util.hpp"

using namespace arrowbf;

TEST_CASE("reference selector weights pass the reference channel through") {
  const testutil::TestScene ts = testutil::make_test_scene(51);
  const Spectrogram Y = stft(ts.scene.mixture, ts.spec);
  const BeamWeights w = BeamWeights::reference_selector(Y.num_bins, Y.num_channels, 0);
  const Spectrogram s = apply_beamformer(w, Y);
  for (int l = 0; l < Y.num_frames; ++l)
    for (int f = 0; f < Y.num_bins; ++f) CHECK(s.at(0, l, f) == Y.at(0, l, f));
}

TEST_CASE("zero weights produce a zero output") {
  const testutil::TestScene ts = testutil::make_test_scene(52);
  const Spectrogram Y = stft(ts.scene.mixture, ts.spec);
  const BeamWeights w = BeamWeights::shared(Y.num_bins, Y.num_channels);
  const Spectrogram s = apply_beamformer(w, Y);
  for (const cplx& v : s.data) CHECK(v == cplx(0.0, 0.0));
}

TEST_CASE("conjugation lands on the right side of the inner product") {
  // Y = (1, j), W = (1, j): 1*1 + conj(j)*j = 2
  const WindowSpec spec{8, 4, 8, WindowKind::kHamming};
  Spectrogram Y;
  Y.spec = spec;
  Y.num_channels = 2;
  Y.num_frames = 1;
  Y.num_bins = spec.num_bins();
  Y.data.assign(2 * Y.num_bins, cplx(0.0, 0.0));
  for (int f = 0; f < Y.num_bins; ++f) {
    Y.at(0, 0, f) = cplx(1.0, 0.0);
    Y.at(1, 0, f) = cplx(0.0, 1.0);
  }
  BeamWeights w = BeamWeights::shared(Y.num_bins, 2);
  for (int f = 0; f < Y.num_bins; ++f) {
    w.at(0, f, 0) = cplx(1.0, 0.0);
    w.at(0, f, 1) = cplx(0.0, 1.0);
  }
  const Spectrogram s = apply_beamformer(w, Y);
  for (int f = 0; f < Y.num_bins; ++f) CHECK(s.at(0, 0, f) == cplx(2.0, 0.0));
}

TEST_CASE("apply_beamformer rejects mismatched shapes") {
  const testutil::TestScene ts = testutil::make_test_scene(53);
  const Spectrogram Y = stft(ts.scene.mixture, ts.spec);
  const BeamWeights w = BeamWeights::shared(Y.num_bins, Y.num_channels + 1);
  CHECK_THROWS_AS(apply_beamformer(w, Y), std::invalid_argument);
}

TEST_CASE("mvdr satisfies the distortionless constraint to machine precision") {
  const testutil::TestScene ts = testutil::make_test_scene(54, 0.0, 1.0, 0.0, 20.0);
  const SceneTensors tensors = SceneTensors::from_scene(ts.scene, ts.spec);
  const BeamWeights w = mvdr_oracle(tensors.mixture, tensors.rtf_target, tensors.vad);

  for (int f = 0; f < w.num_bins; ++f) {
    cplx z(0.0, 0.0);
    for (int m = 0; m < w.num_mics; ++m)
      z += std::conj(w.get(0, f, m)) * tensors.rtf_target.values[f][m];
    CHECK(std::abs(z - cplx(1.0, 0.0)) < 1e-10);
  }
  const ArrowTerms terms =
      arrow_loss(w, tensors.rtf_target, tensors.rtf_interferer, tensors.vad, 1.0);
  CHECK(terms.target_term < 1e-10);

  const DistortionlessReport report = distortionless_residual(w, tensors.rtf_target, 1.0);
  CHECK(report.max_residual < 1e-10);
}

TEST_CASE("white-noise covariance reduces mvdr to the matched filter") {
  const WindowSpec spec;
  const int mics = 4, frames = 8;
  Spectrogram Y;
  Y.spec = spec;
  Y.num_channels = mics;
  Y.num_frames = frames;
  Y.num_bins = spec.num_bins();
  Y.data.assign(static_cast<size_t>(mics) * frames * Y.num_bins, cplx(0.0, 0.0));
  // frame l excites mic (l mod M) only: the SCM is exactly (c^2/M) I
  const double c = 0.7;
  for (int l = 0; l < frames; ++l)
    for (int f = 0; f < Y.num_bins; ++f) Y.at(l % mics, l, f) = cplx(c, 0.0);

  TransferVector rs;
  Rng rng(55);
  rs.values.assign(Y.num_bins, std::vector<cplx>(mics));
  for (auto& bin : rs.values)
    for (auto& v : bin) v = cplx(rng.normal(), rng.normal());

  VadMask vad;
  vad.active.assign(frames, 0);  // everything is noise
  const BeamWeights w = mvdr_oracle(Y, rs, vad);
  for (int f = 0; f < w.num_bins; ++f) {
    double norm2 = 0.0;
    for (int m = 0; m < mics; ++m) norm2 += std::norm(rs.values[f][m]);
    for (int m = 0; m < mics; ++m)
      CHECK(std::abs(w.get(0, f, m) - rs.values[f][m] / norm2) < 1e-10);
  }
}

TEST_CASE("mvdr needs noise-only frames and a usable covariance") {
  const testutil::TestScene ts = testutil::make_test_scene(56);
  const SceneTensors tensors = SceneTensors::from_scene(ts.scene, ts.spec);
  VadMask all_active;
  all_active.active.assign(tensors.mixture.num_frames, 1);
  CHECK_THROWS_AS(mvdr_oracle(tensors.mixture, tensors.rtf_target, all_active),
                  std::invalid_argument);

  // all-zero noise frames leave nothing to invert
  Spectrogram zeros = tensors.mixture;
  std::fill(zeros.data.begin(), zeros.data.end(), cplx(0.0, 0.0));
  VadMask vad;
  vad.active.assign(zeros.num_frames, 0);
  CHECK_THROWS_AS(mvdr_oracle(zeros, tensors.rtf_target, vad), std::runtime_error);
}

TEST_CASE("distortionless residual of zero weights is eta") {
  const testutil::TestScene ts = testutil::make_test_scene(57);
  const SceneTensors tensors = SceneTensors::from_scene(ts.scene, ts.spec);
  const BeamWeights w = BeamWeights::shared(tensors.mixture.num_bins, tensors.mixture.num_channels);
  const DistortionlessReport report = distortionless_residual(w, tensors.rtf_target, 1.0);
  for (double r : report.residual_per_bin) CHECK(r == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("optimizer bookkeeping: best iterate, trace, determinism") {
  const testutil::TestScene ts = testutil::make_test_scene(58, 0.0, 1.0, 0.0, 25.0);
  OptimizerConfig cfg;
  cfg.max_iters = 60;
  const OptimizeResult a = optimize_weights(ts.scene, cfg, ts.spec, &ts.array);
  const OptimizeResult b = optimize_weights(ts.scene, cfg, ts.spec, &ts.array);

  CHECK(!a.loss_trace.empty());
  CHECK(a.best_loss <= a.loss_trace.front());
  CHECK(a.best_loss == *std::min_element(a.loss_trace.begin(), a.loss_trace.end()));
  CHECK(a.loss_trace[a.best_iteration] == a.best_loss);

  // running minimum never increases
  double running = a.loss_trace.front();
  for (double v : a.loss_trace) {
    running = std::min(running, v);
    CHECK(running <= a.loss_trace.front());
  }

  REQUIRE(a.weights.values.size() == b.weights.values.size());
  for (size_t i = 0; i < a.weights.values.size(); ++i)
    CHECK(a.weights.values[i] == b.weights.values[i]);
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("optimized loss does not exceed the initial loss") {
  const testutil::TestScene ts = testutil::make_test_scene(59, 0.0, 1.0, -3.0, 25.0);
  OptimizerConfig cfg;
  cfg.max_iters = 40;
  const OptimizeResult res = optimize_weights(ts.scene, cfg, ts.spec, &ts.array);
  CHECK(res.best_loss <= res.loss_trace.front());
}

TEST_CASE("beta 1 and beta 0.999 start in nearly the same direction") {
  const testutil::TestScene ts = testutil::make_test_scene(60, 0.0, 1.0, 0.0, 25.0);
  const SceneTensors tensors = SceneTensors::from_scene(ts.scene, ts.spec);
  const BeamWeights init = BeamWeights::reference_selector(tensors.mixture.num_bins,
                                                           tensors.mixture.num_channels, 0);
  const BeamWeights g1 = grad_combined_loss(tensors, init, LossWeights{0.5, 1.0});
  const BeamWeights g2 = grad_combined_loss(tensors, init, LossWeights{0.5, 0.999});

  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (size_t i = 0; i < g1.values.size(); ++i) {
    dot += g1.values[i].real() * g2.values[i].real() + g1.values[i].imag() * g2.values[i].imag();
    n1 += std::norm(g1.values[i]);
    n2 += std::norm(g2.values[i]);
  }
  const double angle_deg = std::acos(std::clamp(dot / std::sqrt(n1 * n2), -1.0, 1.0)) * 180.0 / kPi;
  CHECK(angle_deg < 5.0);
}

TEST_CASE("weights serialize and reload bit-exactly") {
  const BeamWeights w = BeamWeights::random_init(257, 4, 123, 0.9);
  const WindowSpec spec;
  const std::string path = "test_weights_roundtrip.json";
  save_weights(path, w, spec, 16000.0);
  WindowSpec spec2;
  double fs = 0.0;
  const BeamWeights r = load_weights(path, &spec2, &fs);
  CHECK(fs == 16000.0);
  CHECK(spec2.window_length == spec.window_length);
  REQUIRE(r.values.size() == w.values.size());
  for (size_t i = 0; i < w.values.size(); ++i) CHECK(r.values[i] == w.values[i]);
  std::remove(path.c_str());
}
