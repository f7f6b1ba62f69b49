#pragma once

#include <optional>
#include <string>

#include "arrowbf/room.hpp"

namespace arrowbf {

struct SceneFiles {
  std::string id;
  std::string mixture_wav;
  std::string target_wav;
  std::string sidecar;
};

// Writes <id>.wav (float32 mixture), <id>_target.wav (clean reference) and
// <id>.json into dir. The sidecar carries everything enhancement needs:
// placements, ratios, VAD, both transfer vectors, the array and the analysis
// spec.
SceneFiles save_scene(const std::string& dir, const std::string& id, const SceneSample& scene,
                      const ArrayGeometry& array, const WindowSpec& spec, const RoomSpec& room);

struct LoadedScene {
  SceneSample scene;
  ArrayGeometry array;
  WindowSpec spec;
  RoomSpec room;
  std::optional<double> truth_angle_deg;  // absent when the sidecar has no placement
};

LoadedScene load_scene(const SceneFiles& files);

struct Manifest {
  uint64_t seed = 0;
  std::vector<SceneFiles> scenes;
};

void save_manifest(const std::string& path, const Manifest& manifest);
Manifest load_manifest(const std::string& path);

// temp-file-then-rename text writer
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace arrowbf
