#include <doctest.h>

#include <filesystem>

#include "arrowbf/scene_io.hpp"
#include "arrowbf/wav.hpp"
#include "test_util.hpp"

using namespace arrowbf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("float32 wav round trip is exact at float precision") {
  TempDir dir("arrowbf_wav_f32");
  WavData w;
  w.sample_rate = 16000.0;
  Rng rng(1);
  w.channels.assign(3, std::vector<double>(500));
  for (auto& ch : w.channels)
    for (double& v : ch) v = 0.5 * rng.normal();

  const std::string path = (dir.path / "x.wav").string();
  write_wav(path, w, WavFormat::kFloat32);
  const WavData r = read_wav(path);
  CHECK(r.sample_rate == 16000.0);
  REQUIRE(r.channels.size() == 3);
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < 500; ++i)
      CHECK(r.channels[c][i] == static_cast<double>(static_cast<float>(w.channels[c][i])));
}

TEST_CASE("pcm16 wav round trip is exact at quantizer precision") {
  TempDir dir("arrowbf_wav_pcm");
  WavData w;
  w.sample_rate = 8000.0;
  Rng rng(2);
  w.channels.assign(2, std::vector<double>(300));
  for (auto& ch : w.channels)
    for (double& v : ch) v = 0.9 * (2.0 * rng.uniform() - 1.0);

  const std::string path = (dir.path / "x.wav").string();
  write_wav(path, w, WavFormat::kPcm16);
  const WavData r = read_wav(path);
  for (int c = 0; c < 2; ++c)
    for (size_t i = 0; i < 300; ++i)
      CHECK(std::abs(r.channels[c][i] - w.channels[c][i]) <= 1.0 / 32767.0 + 1e-9);
}

TEST_CASE("wav reader rejects missing and malformed files") {
  CHECK_THROWS_AS(read_wav("/nonexistent/file.wav"), std::runtime_error);
  TempDir dir("arrowbf_wav_bad");
  const std::string path = (dir.path / "bad.wav").string();
  atomic_write_text(path, "definitely not a wav file, far too short anyway");
  CHECK_THROWS_AS(read_wav(path), std::runtime_error);
}

TEST_CASE("scene save/load round trip preserves the ground truth") {
  TempDir dir("arrowbf_scene_io");
  const testutil::TestScene ts = testutil::make_test_scene(71, 0.0, 1.0, 2.5, 24.0);
  const SceneFiles files = save_scene(dir.str(), "scene_0000", ts.scene, ts.array, ts.spec, ts.room);
  const LoadedScene loaded = load_scene(files);

  CHECK(loaded.scene.sir_db == ts.scene.sir_db);
  CHECK(loaded.scene.snr_db == ts.scene.snr_db);
  CHECK(loaded.scene.achieved_sir_db == ts.scene.achieved_sir_db);
  CHECK(loaded.scene.seed == ts.scene.seed);
  CHECK(loaded.scene.reference_mic == ts.scene.reference_mic);
  CHECK(loaded.scene.vad.active == ts.scene.vad.active);
  CHECK(loaded.array.mic_positions == ts.array.mic_positions);
  CHECK(loaded.spec.window_length == ts.spec.window_length);
  REQUIRE(loaded.truth_angle_deg.has_value());
  CHECK(*loaded.truth_angle_deg == ts.scene.target_placement.angle_deg);

  // transfer vectors survive the JSON round trip bit-exactly
  for (int f = 0; f < ts.scene.rtf_target.num_bins(); ++f)
    for (int m = 0; m < ts.scene.rtf_target.num_mics(); ++m)
      CHECK(loaded.scene.rtf_target.values[f][m] == ts.scene.rtf_target.values[f][m]);

  // waveforms at float32 precision
  for (int m = 0; m < ts.scene.mixture.num_channels(); ++m)
    for (size_t i = 0; i < 100; ++i)
      CHECK(loaded.scene.mixture.channels[m][i] ==
            static_cast<double>(static_cast<float>(ts.scene.mixture.channels[m][i])));
}

TEST_CASE("missing sidecar raises a helpful error") {
  SceneFiles files;
  files.sidecar = "/nonexistent/scene.json";
  CHECK_THROWS_WITH_AS(load_scene(files),
                       "sidecar not found: /nonexistent/scene.json (generate scenes with the "
                       "simulate command first)",
                       std::invalid_argument);
}

TEST_CASE("manifest round trip") {
  TempDir dir("arrowbf_manifest");
  Manifest m;
  m.seed = 42;
  for (int i = 0; i < 3; ++i) {
    SceneFiles f;
    f.id = "scene_" + std::to_string(i);
    f.mixture_wav = (dir.path / (f.id + ".wav")).string();
    f.target_wav = (dir.path / (f.id + "_target.wav")).string();
    f.sidecar = (dir.path / (f.id + ".json")).string();
    m.scenes.push_back(f);
  }
  const std::string path = (dir.path / "manifest.json").string();
  save_manifest(path, m);
  const Manifest r = load_manifest(path);
  CHECK(r.seed == 42);
  REQUIRE(r.scenes.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(r.scenes[i].id == m.scenes[i].id);
    CHECK(r.scenes[i].sidecar == m.scenes[i].sidecar);
  }
}
