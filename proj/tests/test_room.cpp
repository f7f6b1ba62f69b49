#include <doctest.h>

#include "arrowbf/room.hpp"
#include "test_util.hpp"

using namespace arrowbf;

namespace {

int argmax_abs(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = static_cast<int>(i);
  return best;
}

double distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double d2 = 0.0;
  for (int i = 0; i < 3; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d2);
}

}  // namespace

TEST_CASE("anechoic direct path lands on the geometric delay with 1/(4 pi d) gain") {
  RoomSpec room;  // t60 = 0
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(1, 0.08, center);
  // 1.715 m is exactly 80 samples at 16 kHz
  const SourcePlacement src = SourcePlacement::at({3.0, 0.6 + 1.715, 1.5});
  const ImpulseResponse rir = generate_rir(room, src, array, 16000.0);

  const int peak = argmax_abs(rir.taps[0]);
  CHECK(peak == 80);
  CHECK(rir.taps[0][80] == doctest::Approx(1.0 / (4.0 * kPi * 1.715)).epsilon(1e-9));

  // integer delay: the interpolation kernel collapses onto one tap
  double outside = 0.0, total = 0.0;
  for (size_t i = 0; i < rir.taps[0].size(); ++i) {
    const double e = rir.taps[0][i] * rir.taps[0][i];
    total += e;
    if (std::abs(static_cast<int>(i) - peak) > 2) outside += e;
  }
  CHECK(outside < 1e-6 * total);
}

TEST_CASE("direct-path taps follow per-mic geometric delays") {
  RoomSpec room;
  const std::array<double, 3> center{2.5, 1.0, 1.4};
  const ArrayGeometry array = ArrayGeometry::ula(4, 0.08, center);
  const SourcePlacement src = SourcePlacement::polar(57.0, 1.3, center);
  const ImpulseResponse rir = generate_rir(room, src, array, 16000.0);
  for (int m = 0; m < 4; ++m) {
    const double delay = distance(src.position, array.mic_positions[m]) / kSpeedOfSound * 16000.0;
    CHECK(std::abs(argmax_abs(rir.taps[m]) - delay) <= 1.0);
  }
}

TEST_CASE("fractional delays keep all energy inside the interpolation kernel") {
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(1, 0.08, center);
  const SourcePlacement src = SourcePlacement::polar(77.3, 1.1234, center);
  const ImpulseResponse rir = generate_rir(room, src, array, 16000.0);
  const int peak = argmax_abs(rir.taps[0]);
  double outside = 0.0, total = 0.0;
  for (size_t i = 0; i < rir.taps[0].size(); ++i) {
    const double e = rir.taps[0][i] * rir.taps[0][i];
    total += e;
    if (std::abs(static_cast<int>(i) - peak) > kSincHalfWidth + 1) outside += e;
  }
  CHECK(outside < 1e-12 * total);
}

TEST_CASE("reverberant decay matches the requested T60") {
  RoomSpec room;
  room.t60 = 0.4;
  const std::array<double, 3> center{3.0, 1.2, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(1, 0.08, center);
  const SourcePlacement src = SourcePlacement::polar(65.0, 1.5, center);
  const ImpulseResponse rir = generate_rir(room, src, array, 16000.0);
  const double t60 = testutil::schroeder_t60(rir.taps[0], 16000.0);
  CHECK(t60 == doctest::Approx(0.4).epsilon(0.2));
}

TEST_CASE("infeasible T60 and bad placements are rejected") {
  RoomSpec room;
  room.t60 = 0.02;  // Sabine absorption > 1 for the default room
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(1, 0.08, center);
  const SourcePlacement src = SourcePlacement::polar(90.0, 1.0, center);
  CHECK_THROWS_WITH_AS(generate_rir(room, src, array, 16000.0), "absorption out of range",
                       std::invalid_argument);

  RoomSpec ok;
  CHECK_THROWS_AS(generate_rir(ok, SourcePlacement::at({7.0, 1.0, 1.0}), array, 16000.0),
                  std::invalid_argument);
}

TEST_CASE("rtf reference entry is exactly one") {
  const testutil::TestScene ts = testutil::make_test_scene(3, 0.25);
  for (const auto& bin : ts.scene.rtf_target.values) {
    CHECK(bin[0].real() == 1.0);
    CHECK(bin[0].imag() == 0.0);
  }
}

TEST_CASE("broadside equidistant mics see an all-ones rtf") {
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(2, 0.08, center);
  const SourcePlacement src = SourcePlacement::polar(90.0, 1.4, center);
  const ImpulseResponse rir = generate_rir(room, src, array, 16000.0);
  const WindowSpec spec;
  const TransferVector rtf = compute_rtf(rir, array, spec);
  for (int k = 1; k < rtf.num_bins() - 8; ++k)
    CHECK(std::abs(rtf.values[k][1] - cplx(1.0, 0.0)) < 2e-3);
}

TEST_CASE("anechoic rtf phase follows the Fourier shift theorem") {
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(2, 0.08, center);
  const SourcePlacement src = SourcePlacement::polar(40.0, 2.0, center);
  const ImpulseResponse rir = generate_rir(room, src, array, 16000.0);
  const WindowSpec spec;
  const TransferVector rtf = compute_rtf(rir, array, spec);

  const double d0 = distance(src.position, array.mic_positions[0]);
  const double d1 = distance(src.position, array.mic_positions[1]);
  const double tau = (d1 - d0) / kSpeedOfSound;
  for (int k = 1; k < rtf.num_bins() - 8; ++k) {
    const double f_hz = k * 16000.0 / spec.fft_size;
    const cplx expected_phase = std::polar(1.0, -2.0 * kPi * f_hz * tau);
    CHECK(std::abs(std::arg(rtf.values[k][1] * std::conj(expected_phase))) < 1e-3);
  }
}

TEST_CASE("compute_rtf rejects an all-zero response") {
  ImpulseResponse rir;
  rir.taps.assign(2, std::vector<double>(128, 0.0));
  const ArrayGeometry array = ArrayGeometry::ula(2, 0.08, {1.0, 1.0, 1.0});
  CHECK_THROWS_AS(compute_rtf(rir, array, WindowSpec{}), std::invalid_argument);
}

TEST_CASE("steering vector values") {
  const WindowSpec spec;
  const ArrayGeometry array = ArrayGeometry::ula(4, 0.08, {3.0, 0.6, 1.5});

  SUBCASE("broadside is all ones") {
    const TransferVector a = steering_vector(90.0, array, spec, 16000.0);
    for (const auto& bin : a.values)
      for (const cplx& v : bin) CHECK(std::abs(v - cplx(1.0, 0.0)) < 1e-12);
  }
  SUBCASE("endfire phase at 1 kHz") {
    // grazing incidence; cos(theta) -> 1
    const TransferVector a = steering_vector(0.01, array, spec, 16000.0);
    const int k = 32;  // 1 kHz
    CHECK(std::arg(a.values[k][1]) == doctest::Approx(-2.0 * kPi * 1000.0 * 0.08 / 343.0).epsilon(1e-4));
  }
  SUBCASE("unit modulus everywhere") {
    for (double theta : {35.0, 77.0, 138.5}) {
      const TransferVector a = steering_vector(theta, array, spec, 16000.0);
      for (const auto& bin : a.values)
        for (const cplx& v : bin) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("rejects bad angles and non-ULA geometry") {
    CHECK_THROWS_AS(steering_vector(0.0, array, spec, 16000.0), std::invalid_argument);
    CHECK_THROWS_AS(steering_vector(180.0, array, spec, 16000.0), std::invalid_argument);
    ArrayGeometry bent = array;
    bent.mic_positions[2][1] += 0.05;
    CHECK_THROWS_AS(steering_vector(90.0, bent, spec, 16000.0), std::invalid_argument);
  }
}

TEST_CASE("mixture hits the requested SIR and SNR exactly") {
  const testutil::TestScene ts = testutil::make_test_scene(17, 0.0, 1.0, 4.5, 22.0);
  const auto power = [](const std::vector<double>& x) {
    double p = 0.0;
    for (double v : x) p += v * v;
    return p / x.size();
  };
  const double sir = power_to_db(power(ts.scene.target_image_ref) /
                                 power(ts.scene.interferer_image_ref));
  const double snr = power_to_db(power(ts.scene.target_image_ref) / power(ts.scene.noise_ref));
  CHECK(std::abs(sir - 4.5) < 1e-6);
  CHECK(std::abs(snr - 22.0) < 1e-6);

  // mixture decomposes into the stored components
  for (size_t i = 0; i < 200; ++i) {
    const double sum = ts.scene.target_image_ref[i] + ts.scene.interferer_image_ref[i] +
                       ts.scene.noise_ref[i];
    CHECK(ts.scene.mixture.channels[0][i] == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("infinite SNR leaves the mixture noise free") {
  const testutil::TestScene ts =
      testutil::make_test_scene(18, 0.0, 1.0, 0.0, std::numeric_limits<double>::infinity());
  CHECK(ts.scene.noise_ref.empty());
  for (size_t i = 0; i < ts.scene.mixture.num_samples(); ++i)
    CHECK(ts.scene.mixture.channels[0][i] ==
          ts.scene.target_image_ref[i] + ts.scene.interferer_image_ref[i]);
}

TEST_CASE("mixture synthesis is deterministic per seed") {
  const testutil::TestScene a = testutil::make_test_scene(99, 0.0, 1.0);
  const testutil::TestScene b = testutil::make_test_scene(99, 0.0, 1.0);
  REQUIRE(a.scene.mixture.num_samples() == b.scene.mixture.num_samples());
  for (int m = 0; m < a.scene.mixture.num_channels(); ++m)
    CHECK(a.scene.mixture.channels[m] == b.scene.mixture.channels[m]);
}

TEST_CASE("silent source is rejected") {
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(2, 0.08, center);
  const ImpulseResponse rir =
      generate_rir(room, SourcePlacement::polar(80.0, 1.0, center), array, 16000.0);
  const std::vector<double> silent(16000, 0.0), tone = [] {
    std::vector<double> t(16000);
    for (size_t i = 0; i < t.size(); ++i) t[i] = std::sin(0.1 * i);
    return t;
  }();
  CHECK_THROWS_WITH_AS(synthesize_mixture(tone, silent, rir, rir, 0, WindowSpec{}, MixtureOptions{}),
                       "cannot set SIR against zero-power source", std::invalid_argument);
}

TEST_CASE("scene sampling satisfies the placement constraints") {
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  ScenePlacementConfig cfg;
  Rng rng(123);
  for (int i = 0; i < 10000; ++i) {
    const auto [t, n] = sample_scene(rng, cfg, room, center);
    CHECK(std::abs(t.angle_deg - n.angle_deg) >= 15.0);
    for (const SourcePlacement* p : {&t, &n}) {
      CHECK(p->radius_m >= 0.75);
      CHECK(p->radius_m <= 2.1);
      CHECK(p->angle_deg >= 30.0);
      CHECK(p->angle_deg <= 150.0);
    }
  }
}

TEST_CASE("grid mode draws from the coarse test directions") {
  RoomSpec room;
  const std::array<double, 3> center{3.0, 0.6, 1.5};
  ScenePlacementConfig cfg;
  cfg.grid_mode = true;
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const auto [t, n] = sample_scene(rng, cfg, room, center);
    for (const SourcePlacement* p : {&t, &n}) {
      const double rem = std::fmod(p->angle_deg - 30.0, 15.0);
      CHECK(std::min(rem, 15.0 - rem) < 1e-9);
    }
    CHECK(std::abs(t.angle_deg - n.angle_deg) >= 15.0);
  }
}
