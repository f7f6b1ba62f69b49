#include "arrowbf/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace arrowbf {
namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

void append_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u16(std::string& s, uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open WAV file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, num_channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data = nullptr;
  size_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t size = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) break;
    if (std::memcmp(id, "fmt ", 4) == 0 && size >= 16) {
      const uint8_t* p = bytes.data() + body;
      format = read_u16(p);
      num_channels = read_u16(p + 2);
      sample_rate = read_u32(p + 4);
      bits = read_u16(p + 14);
      if (format == kFormatExtensible && size >= 26) {
        // first two bytes of the subformat GUID carry the real format code
        format = read_u16(p + 24);
      }
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }

  if (num_channels == 0 || sample_rate == 0) throw std::runtime_error("WAV missing fmt chunk: " + path);
  if (data == nullptr) throw std::runtime_error("WAV missing data chunk: " + path);

  WavData out;
  out.sample_rate = sample_rate;
  if (format == kFormatPcm && bits == 16) {
    const size_t frames = data_size / (2 * num_channels);
    out.channels.assign(num_channels, std::vector<double>(frames));
    for (size_t i = 0; i < frames; ++i)
      for (uint16_t c = 0; c < num_channels; ++c) {
        int16_t v;
        std::memcpy(&v, data + (i * num_channels + c) * 2, 2);
        out.channels[c][i] = v / 32768.0;
      }
  } else if (format == kFormatFloat && bits == 32) {
    const size_t frames = data_size / (4 * num_channels);
    out.channels.assign(num_channels, std::vector<double>(frames));
    for (size_t i = 0; i < frames; ++i)
      for (uint16_t c = 0; c < num_channels; ++c) {
        float v;
        std::memcpy(&v, data + (i * num_channels + c) * 4, 4);
        out.channels[c][i] = v;
      }
  } else {
    throw std::runtime_error("unsupported WAV encoding (need PCM16 or float32): " + path);
  }
  return out;
}

void write_wav(const std::string& path, const WavData& wav, WavFormat format) {
  if (wav.channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const size_t frames = wav.channels[0].size();
  for (const auto& ch : wav.channels)
    if (ch.size() != frames) throw std::invalid_argument("write_wav: channels differ in length");

  const uint16_t num_channels = static_cast<uint16_t>(wav.channels.size());
  const uint16_t bytes_per_sample = format == WavFormat::kPcm16 ? 2 : 4;
  const uint32_t byte_rate = static_cast<uint32_t>(wav.sample_rate) * num_channels * bytes_per_sample;
  const uint32_t data_size = static_cast<uint32_t>(frames * num_channels * bytes_per_sample);
  const bool is_float = format == WavFormat::kFloat32;

  std::string buf;
  buf.reserve(64 + data_size);
  buf.append("RIFF");
  append_u32(buf, 4 + (8 + 16) + (is_float ? 8 + 4 : 0) + 8 + data_size);
  buf.append("WAVE");
  buf.append("fmt ");
  append_u32(buf, 16);
  append_u16(buf, is_float ? kFormatFloat : kFormatPcm);
  append_u16(buf, num_channels);
  append_u32(buf, static_cast<uint32_t>(wav.sample_rate));
  append_u32(buf, byte_rate);
  append_u16(buf, static_cast<uint16_t>(num_channels * bytes_per_sample));
  append_u16(buf, static_cast<uint16_t>(8 * bytes_per_sample));
  if (is_float) {
    // non-PCM encodings carry a fact chunk with the frame count
    buf.append("fact");
    append_u32(buf, 4);
    append_u32(buf, static_cast<uint32_t>(frames));
  }
  buf.append("data");
  append_u32(buf, data_size);

  for (size_t i = 0; i < frames; ++i)
    for (uint16_t c = 0; c < num_channels; ++c) {
      const double v = wav.channels[c][i];
      if (format == WavFormat::kPcm16) {
        const double clipped = std::clamp(v, -1.0, 1.0);
        const int16_t q = static_cast<int16_t>(std::lrint(clipped * 32767.0));
        buf.push_back(static_cast<char>(q & 0xFF));
        buf.push_back(static_cast<char>((q >> 8) & 0xFF));
      } else {
        const float fv = static_cast<float>(v);
        char raw[4];
        std::memcpy(raw, &fv, 4);
        buf.append(raw, 4);
      }
    }

  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace arrowbf
