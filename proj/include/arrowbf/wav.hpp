#pragma once

#include <string>
#include <vector>

namespace arrowbf {

enum class WavFormat { kPcm16, kFloat32 };

struct WavData {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;
};

// RIFF/WAVE reader for PCM16 and IEEE float32 (plus the extensible wrappers of
// either); samples normalized to [-1, 1).
WavData read_wav(const std::string& path);

// Interleaved multichannel writer. Writes to a temp file and renames, so a
// crashed run never leaves a truncated WAV behind.
void write_wav(const std::string& path, const WavData& wav, WavFormat format = WavFormat::kFloat32);

}  // namespace arrowbf
