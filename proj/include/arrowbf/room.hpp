#pragma once

#include <array>
#include <utility>

#include "arrowbf/stft.hpp"

namespace arrowbf {

struct RoomSpec {
  std::array<double, 3> dimensions{6.0, 5.0, 3.0};  // meters
  double t60 = 0.0;                                 // seconds; 0 = anechoic
  double speed_of_sound = kSpeedOfSound;

  void validate() const;
};

struct ArrayGeometry {
  std::vector<std::array<double, 3>> mic_positions;
  int reference_index = 0;

  int num_mics() const { return static_cast<int>(mic_positions.size()); }
  std::array<double, 3> center() const;
  void validate() const;

  // Uniform linear array along +x, centered on `center`, reference mic 0.
  static ArrayGeometry ula(int num_mics, double spacing, const std::array<double, 3>& center);

  // True when the mics lie on a line with uniform spacing (in position order);
  // reports the spacing.
  bool is_ula(double* spacing_out = nullptr) const;
};

struct SourcePlacement {
  std::array<double, 3> position{};
  double angle_deg = 0.0;  // from the array axis; 90 = broadside
  double radius_m = 0.0;
  bool has_polar = false;

  static SourcePlacement at(const std::array<double, 3>& pos);
  // Angle measured from the array axis in the horizontal plane through the
  // array center.
  static SourcePlacement polar(double angle_deg, double radius_m,
                               const std::array<double, 3>& array_center);
};

struct ImpulseResponse {
  std::vector<std::vector<double>> taps;  // per mic
  double sample_rate = 16000.0;

  int num_mics() const { return static_cast<int>(taps.size()); }
};

// Per-frequency complex response across the array, indexed [bin][mic].
struct TransferVector {
  std::vector<std::vector<cplx>> values;

  int num_bins() const { return static_cast<int>(values.size()); }
  int num_mics() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
};

struct RirOptions {
  int max_order = -1;  // -1: bounded only by the response length
  int num_taps = 0;    // 0: derived from t60 and geometry
};

// Image-method room impulse response with fractional delays realized by an
// 81-tap Hann-windowed sinc; direct-path amplitude 1/(4*pi*distance).
ImpulseResponse generate_rir(const RoomSpec& room, const SourcePlacement& source,
                             const ArrayGeometry& array, double sample_rate,
                             const RirOptions& options = {});

inline constexpr int kSincHalfWidth = 40;  // 81-tap interpolation kernel

// Ratio of each mic's early transfer function to the reference mic's, taken at
// the STFT bin frequencies. Each mic's response is truncated to the direct
// arrival plus early_window_s before the transform; tap positions stay
// absolute so relative delays survive the ratio.
TransferVector compute_rtf(const ImpulseResponse& rir, const ArrayGeometry& array,
                           const WindowSpec& spec, double early_window_s = 0.016);

// Free-field plane-wave steering vector for a ULA:
// a[k][m] = exp(-j*2*pi*f_k*(m*d*cos(theta))/c). Unit modulus everywhere.
TransferVector steering_vector(double theta_deg, const ArrayGeometry& array,
                               const WindowSpec& spec, double sample_rate,
                               double speed_of_sound = kSpeedOfSound);

struct SceneSample {
  MultichannelWaveform mixture;
  std::vector<double> clean_reference;  // early target image at the reference mic
  SourcePlacement target_placement, interferer_placement;
  TransferVector rtf_target, rtf_interferer;
  VadMask vad;
  double sir_db = 0.0, snr_db = 0.0;  // requested
  double achieved_sir_db = 0.0, achieved_snr_db = 0.0;
  double t60 = 0.0;
  uint64_t seed = 0;
  int reference_mic = 0;
  double sample_rate = 16000.0;
  // Reference-mic mixture components, kept for metrics; not serialized.
  std::vector<double> target_image_ref, interferer_image_ref, noise_ref;
};

struct MixtureOptions {
  double sir_db = 0.0;
  double snr_db = 30.0;  // +infinity disables sensor noise
  uint64_t seed = 0;
  double early_window_s = 0.016;
  double vad_threshold_db = 40.0;
};

// Convolves both sources with their RIRs, scales the interferer image for the
// requested SIR at the reference mic, and adds white sensor noise at the
// requested SNR relative to the target image there. Both ratios are exact by
// construction (the scaling uses the measured image powers).
SceneSample synthesize_mixture(const std::vector<double>& target,
                               const std::vector<double>& interferer,
                               const ImpulseResponse& rir_target,
                               const ImpulseResponse& rir_interferer, int reference_mic,
                               const WindowSpec& spec, const MixtureOptions& options);

struct ScenePlacementConfig {
  double angle_min_deg = 30.0, angle_max_deg = 150.0;
  double radius_min_m = 0.75, radius_max_m = 2.1;
  double min_separation_deg = 15.0;
  bool grid_mode = false;       // draw angles from the coarse test grid instead
  double grid_step_deg = 15.0;
  double wall_margin_m = 0.1;
  int max_retries = 10000;
};

// Draws target and interferer placements in the ring sector, at least
// min_separation_deg apart, strictly inside the room.
std::pair<SourcePlacement, SourcePlacement> sample_scene(Rng& rng,
                                                         const ScenePlacementConfig& config,
                                                         const RoomSpec& room,
                                                         const std::array<double, 3>& array_center);

// Linear convolution via FFT, truncated to out_len samples.
std::vector<double> fft_convolve(const std::vector<double>& signal,
                                 const std::vector<double>& kernel, size_t out_len);

}  // namespace arrowbf
