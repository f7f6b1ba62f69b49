#include "arrowbf/scene_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "arrowbf/loss.hpp"
#include "arrowbf/wav.hpp"

namespace arrowbf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json transfer_to_json(const TransferVector& tv) {
  json out = json::array();
  for (const auto& bin : tv.values) {
    json row = json::array();
    for (const cplx& v : bin) row.push_back(json::array({v.real(), v.imag()}));
    out.push_back(std::move(row));
  }
  return out;
}

TransferVector transfer_from_json(const json& j) {
  TransferVector tv;
  for (const auto& row : j) {
    std::vector<cplx> bin;
    for (const auto& v : row) bin.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    tv.values.push_back(std::move(bin));
  }
  return tv;
}

json placement_to_json(const SourcePlacement& p) {
  json j;
  j["position"] = {p.position[0], p.position[1], p.position[2]};
  if (p.has_polar) {
    j["angle_deg"] = p.angle_deg;
    j["radius_m"] = p.radius_m;
  }
  return j;
}

SourcePlacement placement_from_json(const json& j) {
  SourcePlacement p;
  const auto& pos = j.at("position");
  p.position = {pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>()};
  if (j.contains("angle_deg")) {
    p.angle_deg = j.at("angle_deg").get<double>();
    p.radius_m = j.value("radius_m", 0.0);
    p.has_polar = true;
  }
  return p;
}

const char* window_name(WindowKind k) {
  switch (k) {
    case WindowKind::kHamming: return "hamming";
    case WindowKind::kHann: return "hann";
    case WindowKind::kRect: return "rect";
  }
  return "hamming";
}

WindowKind window_from_name(const std::string& s) {
  if (s == "hamming") return WindowKind::kHamming;
  if (s == "hann") return WindowKind::kHann;
  if (s == "rect") return WindowKind::kRect;
  throw std::runtime_error("unknown window kind in sidecar: " + s);
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
  const fs::path tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
    f << content;
    if (!f) throw std::runtime_error("short write: " + tmp.string());
  }
  fs::rename(tmp, fs::path(path));
}

SceneFiles save_scene(const std::string& dir, const std::string& id, const SceneSample& scene,
                      const ArrayGeometry& array, const WindowSpec& spec, const RoomSpec& room) {
  fs::create_directories(dir);
  SceneFiles files;
  files.id = id;
  files.mixture_wav = (fs::path(dir) / (id + ".wav")).string();
  files.target_wav = (fs::path(dir) / (id + "_target.wav")).string();
  files.sidecar = (fs::path(dir) / (id + ".json")).string();

  WavData mix{scene.mixture.channels, scene.mixture.sample_rate};
  write_wav(files.mixture_wav, mix, WavFormat::kFloat32);
  WavData target{{scene.clean_reference}, scene.sample_rate};
  write_wav(files.target_wav, target, WavFormat::kFloat32);

  json j;
  j["id"] = id;
  j["sample_rate"] = scene.sample_rate;
  j["t60"] = scene.t60;
  j["sir_db"] = scene.sir_db;
  if (std::isfinite(scene.snr_db)) j["snr_db"] = scene.snr_db;
  j["achieved_sir_db"] = scene.achieved_sir_db;
  if (std::isfinite(scene.achieved_snr_db)) j["achieved_snr_db"] = scene.achieved_snr_db;
  j["seed"] = scene.seed;
  j["reference_mic"] = scene.reference_mic;
  j["target"] = placement_to_json(scene.target_placement);
  j["interferer"] = placement_to_json(scene.interferer_placement);
  j["room"] = {{"dimensions", {room.dimensions[0], room.dimensions[1], room.dimensions[2]}},
               {"t60", room.t60},
               {"speed_of_sound", room.speed_of_sound}};
  json mics = json::array();
  for (const auto& p : array.mic_positions) mics.push_back({p[0], p[1], p[2]});
  j["array"] = {{"mic_positions", std::move(mics)}, {"reference_index", array.reference_index}};
  j["stft"] = {{"window_length", spec.window_length},
               {"hop_length", spec.hop_length},
               {"fft_size", spec.fft_size},
               {"kind", window_name(spec.window_kind)}};
  j["vad"] = scene.vad.active;
  j["rtf_target"] = transfer_to_json(scene.rtf_target);
  j["rtf_interferer"] = transfer_to_json(scene.rtf_interferer);
  j["files"] = {{"mixture", fs::path(files.mixture_wav).filename().string()},
                {"target", fs::path(files.target_wav).filename().string()}};

  atomic_write_text(files.sidecar, j.dump(2));
  return files;
}

LoadedScene load_scene(const SceneFiles& files) {
  std::ifstream f(files.sidecar);
  if (!f)
    throw std::invalid_argument("sidecar not found: " + files.sidecar +
                                " (generate scenes with the simulate command first)");
  json j;
  f >> j;

  LoadedScene out;
  SceneSample& scene = out.scene;
  scene.sample_rate = j.at("sample_rate").get<double>();
  scene.t60 = j.value("t60", 0.0);
  scene.sir_db = j.value("sir_db", 0.0);
  scene.snr_db = j.contains("snr_db") ? j.at("snr_db").get<double>()
                                      : std::numeric_limits<double>::infinity();
  scene.achieved_sir_db = j.value("achieved_sir_db", scene.sir_db);
  scene.achieved_snr_db = j.contains("achieved_snr_db") ? j.at("achieved_snr_db").get<double>()
                                                        : std::numeric_limits<double>::infinity();
  scene.seed = j.value("seed", static_cast<uint64_t>(0));
  scene.reference_mic = j.value("reference_mic", 0);
  if (j.contains("target")) {
    scene.target_placement = placement_from_json(j.at("target"));
    if (scene.target_placement.has_polar) out.truth_angle_deg = scene.target_placement.angle_deg;
  }
  if (j.contains("interferer"))
    scene.interferer_placement = placement_from_json(j.at("interferer"));

  if (j.contains("room")) {
    const auto& jr = j.at("room");
    const auto& dims = jr.at("dimensions");
    out.room.dimensions = {dims.at(0).get<double>(), dims.at(1).get<double>(),
                           dims.at(2).get<double>()};
    out.room.t60 = jr.value("t60", 0.0);
    out.room.speed_of_sound = jr.value("speed_of_sound", kSpeedOfSound);
  }
  const auto& ja = j.at("array");
  for (const auto& p : ja.at("mic_positions"))
    out.array.mic_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  out.array.reference_index = ja.value("reference_index", 0);

  const auto& js = j.at("stft");
  out.spec.window_length = js.at("window_length").get<int>();
  out.spec.hop_length = js.at("hop_length").get<int>();
  out.spec.fft_size = js.at("fft_size").get<int>();
  out.spec.window_kind = window_from_name(js.value("kind", "hamming"));

  scene.vad.active = j.at("vad").get<std::vector<uint8_t>>();
  scene.rtf_target = transfer_from_json(j.at("rtf_target"));
  scene.rtf_interferer = transfer_from_json(j.at("rtf_interferer"));

  const WavData mix = read_wav(files.mixture_wav);
  scene.mixture.channels = mix.channels;
  scene.mixture.sample_rate = mix.sample_rate;
  const WavData target = read_wav(files.target_wav);
  if (target.channels.empty()) throw std::runtime_error("empty target WAV: " + files.target_wav);
  scene.clean_reference = target.channels[0];
  return out;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
  json j;
  j["seed"] = manifest.seed;
  json scenes = json::array();
  for (const SceneFiles& s : manifest.scenes) {
    scenes.push_back({{"id", s.id},
                      {"mixture", fs::path(s.mixture_wav).filename().string()},
                      {"target", fs::path(s.target_wav).filename().string()},
                      {"sidecar", fs::path(s.sidecar).filename().string()}});
  }
  j["scenes"] = std::move(scenes);
  atomic_write_text(path, j.dump(2));
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("manifest not found: " + path);
  json j;
  f >> j;
  Manifest m;
  m.seed = j.value("seed", static_cast<uint64_t>(0));
  const fs::path dir = fs::path(path).parent_path();
  for (const auto& s : j.at("scenes")) {
    SceneFiles files;
    files.id = s.at("id").get<std::string>();
    files.mixture_wav = (dir / s.at("mixture").get<std::string>()).string();
    files.target_wav = (dir / s.at("target").get<std::string>()).string();
    files.sidecar = (dir / s.at("sidecar").get<std::string>()).string();
    m.scenes.push_back(std::move(files));
  }
  return m;
}

}  // namespace arrowbf
