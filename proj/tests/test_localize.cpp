#include <doctest.h>

#include "arrowbf/localize.hpp"
#include "arrowbf/optimizer.hpp"
#include "test_util.hpp"

using namespace arrowbf;

namespace {

struct Fixture {
  WindowSpec spec;
  ArrayGeometry array = ArrayGeometry::ula(4, 0.08, {3.0, 0.6, 1.5});
  VadMask vad;
  Fixture() { vad.active = {1, 1, 0, 1, 0, 1}; }
};

}  // namespace

TEST_CASE("delay-and-sum weights give unit response at their steering angle") {
  Fixture fx;
  const double theta0 = 75.0;
  const BeamWeights w =
      BeamWeights::delay_and_sum(steering_vector(theta0, fx.array, fx.spec, 16000.0));
  const AngularGrid grid = AngularGrid::fine();
  const Beampattern bp = beampattern(w, grid, fx.vad, fx.array, fx.spec, 16000.0);

  const size_t idx = static_cast<size_t>(theta0 - 30.0);
  CHECK(bp.grid.angles[idx] == theta0);
  CHECK(bp.values[idx] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(estimate_doa(bp).theta_hat == theta0);
  for (double v : bp.values) CHECK(v <= 1.0 + 1e-12);
}

TEST_CASE("zero weights give a zero beampattern") {
  Fixture fx;
  const BeamWeights w = BeamWeights::shared(fx.spec.num_bins(), 4);
  const Beampattern bp = beampattern(w, AngularGrid::coarse(), fx.vad, fx.array, fx.spec, 16000.0);
  for (double v : bp.values) CHECK(v == 0.0);
}

TEST_CASE("broadside delay-and-sum beampattern is symmetric about 90 degrees") {
  Fixture fx;
  const BeamWeights w =
      BeamWeights::delay_and_sum(steering_vector(90.0, fx.array, fx.spec, 16000.0));
  const Beampattern bp = beampattern(w, AngularGrid::fine(), fx.vad, fx.array, fx.spec, 16000.0);
  const int n = static_cast<int>(bp.values.size());
  for (int i = 0; i < n / 2; ++i)
    CHECK(bp.values[i] == doctest::Approx(bp.values[n - 1 - i]).epsilon(1e-12));
}

TEST_CASE("estimate_doa tie-break picks the smaller angle") {
  Beampattern bp;
  bp.grid = AngularGrid::coarse();
  bp.values.assign(bp.grid.angles.size(), 0.5);
  CHECK(estimate_doa(bp).theta_hat == 30.0);
}

TEST_CASE("positive scaling leaves the peak set unchanged") {
  Fixture fx;
  const BeamWeights w =
      BeamWeights::delay_and_sum(steering_vector(120.0, fx.array, fx.spec, 16000.0));
  const AngularGrid grid = AngularGrid::fine();
  const Beampattern base = beampattern(w, grid, fx.vad, fx.array, fx.spec, 16000.0);
  for (double c : {0.5, 3.0}) {
    BeamWeights scaled = w;
    for (auto& v : scaled.values) v *= c;
    const Beampattern bp = beampattern(scaled, grid, fx.vad, fx.array, fx.spec, 16000.0);
    for (size_t i = 0; i < bp.values.size(); ++i)
      CHECK(bp.values[i] == doctest::Approx(c * base.values[i]).epsilon(1e-12));
    CHECK(estimate_doa(bp).theta_hat == 120.0);
  }
}

TEST_CASE("beampattern requires active frames") {
  Fixture fx;
  fx.vad.active.assign(6, 0);
  const BeamWeights w = BeamWeights::reference_selector(fx.spec.num_bins(), 4, 0);
  CHECK_THROWS_WITH_AS(beampattern(w, AngularGrid::fine(), fx.vad, fx.array, fx.spec, 16000.0),
                       "no active frames", std::runtime_error);
}

TEST_CASE("per-frame estimates: shared weights repeat the utterance estimate") {
  Fixture fx;
  const BeamWeights w =
      BeamWeights::delay_and_sum(steering_vector(60.0, fx.array, fx.spec, 16000.0));
  std::vector<int> frames;
  const std::vector<double> est = per_frame_doa(w, AngularGrid::fine(), fx.vad, fx.array, fx.spec,
                                                16000.0, kSpeedOfSound, &frames);
  CHECK(est.size() == static_cast<size_t>(fx.vad.present_count()));
  CHECK(frames == std::vector<int>{0, 1, 3, 5});
  for (double e : est) CHECK(e == 60.0);
}

TEST_CASE("per-frame estimates follow alternating time-varying weights") {
  Fixture fx;
  fx.vad.active = {1, 1, 1, 1};
  const TransferVector a60 = steering_vector(60.0, fx.array, fx.spec, 16000.0);
  const TransferVector a120 = steering_vector(120.0, fx.array, fx.spec, 16000.0);
  BeamWeights w = BeamWeights::per_frame(4, fx.spec.num_bins(), 4);
  for (int l = 0; l < 4; ++l) {
    const TransferVector& a = (l % 2 == 0) ? a60 : a120;
    for (int f = 0; f < w.num_bins; ++f)
      for (int m = 0; m < 4; ++m) w.at(l, f, m) = a.values[f][m] / 4.0;
  }
  const std::vector<double> est =
      per_frame_doa(w, AngularGrid::fine(), fx.vad, fx.array, fx.spec, 16000.0);
  CHECK(est == std::vector<double>{60.0, 120.0, 60.0, 120.0});
}

TEST_CASE("localization accuracy counting") {
  CHECK(localization_accuracy(std::vector<double>{75.0, 75.0, 75.0}, 75.0) == 100.0);
  CHECK(localization_accuracy(std::vector<double>{75.0, 95.0, 75.0, 95.0}, 75.0) == 50.0);
  // exactly 15 degrees off counts as incorrect
  CHECK(localization_accuracy(std::vector<double>{90.0}, 75.0) == 0.0);
  CHECK(localization_accuracy(std::vector<double>{89.9}, 75.0) == 100.0);
  CHECK_THROWS_AS(localization_accuracy(std::vector<double>{}, 75.0), std::invalid_argument);
  const double acc = localization_accuracy(std::vector<double>{75.0, 95.0}, 75.0);
  CHECK(acc >= 0.0);
  CHECK(acc <= 100.0);
}

TEST_CASE("mvdr weights localize an anechoic target within the metric tolerance") {
  Rng rng(61);
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(4, 0.08, center);
  const WindowSpec spec;
  const SourcePlacement target_p = SourcePlacement::polar(75.0, 1.4, center);
  const SourcePlacement interferer_p = SourcePlacement::polar(115.0, 1.6, center);
  const std::vector<double> target = make_speech_like(rng, 16000.0, 1.0, 0.6);
  const std::vector<double> interferer = make_chirp_interferer(rng, 16000.0, 1.0);
  const ImpulseResponse rir_s = generate_rir(room, target_p, array, 16000.0);
  const ImpulseResponse rir_n = generate_rir(room, interferer_p, array, 16000.0);
  MixtureOptions mix;
  mix.snr_db = 25.0;
  mix.seed = 61;
  const SceneSample scene = synthesize_mixture(target, interferer, rir_s, rir_n, 0, spec, mix);
  const SceneTensors tensors = SceneTensors::from_scene(scene, spec);

  const BeamWeights w = mvdr_oracle(tensors.mixture, tensors.rtf_target, tensors.vad);
  const Beampattern bp =
      beampattern(w, AngularGrid::fine(), tensors.vad, array, spec, 16000.0);
  CHECK(std::abs(estimate_doa(bp).theta_hat - 75.0) < 15.0);
}
