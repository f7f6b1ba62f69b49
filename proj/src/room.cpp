#include "arrowbf/room.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "arrowbf/loss.hpp"

namespace arrowbf {

void RoomSpec::validate() const {
  for (double d : dimensions)
    if (d <= 0.0) throw std::invalid_argument("room dimensions must be positive");
  if (t60 < 0.0) throw std::invalid_argument("t60 must be non-negative");
  if (speed_of_sound <= 0.0) throw std::invalid_argument("speed of sound must be positive");
}

std::array<double, 3> ArrayGeometry::center() const {
  std::array<double, 3> c{0, 0, 0};
  for (const auto& p : mic_positions)
    for (int i = 0; i < 3; ++i) c[i] += p[i];
  for (int i = 0; i < 3; ++i) c[i] /= std::max(num_mics(), 1);
  return c;
}

void ArrayGeometry::validate() const {
  if (mic_positions.empty()) throw std::invalid_argument("array needs at least one mic");
  if (reference_index < 0 || reference_index >= num_mics())
    throw std::invalid_argument("reference_index out of range");
}

ArrayGeometry ArrayGeometry::ula(int num_mics, double spacing, const std::array<double, 3>& center) {
  if (num_mics < 1) throw std::invalid_argument("ula: need at least one mic");
  if (spacing <= 0.0) throw std::invalid_argument("ula: spacing must be positive");
  ArrayGeometry g;
  const double half_span = 0.5 * (num_mics - 1) * spacing;
  for (int m = 0; m < num_mics; ++m)
    g.mic_positions.push_back({center[0] - half_span + m * spacing, center[1], center[2]});
  g.reference_index = 0;
  return g;
}

bool ArrayGeometry::is_ula(double* spacing_out) const {
  const int m_count = num_mics();
  if (m_count == 1) {
    if (spacing_out) *spacing_out = 0.0;
    return true;
  }
  std::array<double, 3> step{};
  double d = 0.0;
  for (int i = 0; i < 3; ++i) step[i] = mic_positions[1][i] - mic_positions[0][i];
  d = std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
  if (d < 1e-12) return false;
  for (int m = 2; m < m_count; ++m) {
    for (int i = 0; i < 3; ++i) {
      const double expect = mic_positions[0][i] + m * step[i];
      if (std::abs(mic_positions[m][i] - expect) > 1e-9) return false;
    }
  }
  if (spacing_out) *spacing_out = d;
  return true;
}

SourcePlacement SourcePlacement::at(const std::array<double, 3>& pos) {
  SourcePlacement p;
  p.position = pos;
  return p;
}

SourcePlacement SourcePlacement::polar(double angle_deg, double radius_m,
                                       const std::array<double, 3>& array_center) {
  SourcePlacement p;
  p.angle_deg = angle_deg;
  p.radius_m = radius_m;
  p.has_polar = true;
  const double rad = angle_deg * kPi / 180.0;
  p.position = {array_center[0] + radius_m * std::cos(rad),
                array_center[1] + radius_m * std::sin(rad), array_center[2]};
  return p;
}

namespace {

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

// Deposits a Hann-windowed sinc of unit area at a fractional sample delay.
void add_fractional_tap(std::vector<double>& h, double delay_samples, double gain) {
  constexpr int kWidth = 2 * kSincHalfWidth + 1;  // 81
  const int i0 = static_cast<int>(std::floor(delay_samples));
  const double frac = delay_samples - i0;
  const int len = static_cast<int>(h.size());
  for (int n = -kSincHalfWidth; n <= kSincHalfWidth + 1; ++n) {
    const double t = n - frac;  // tap offset from the true delay
    if (std::abs(t) > kWidth / 2.0 + 0.5) continue;
    const int p = i0 + n;
    if (p < 0 || p >= len) continue;
    const double win = 0.5 * (1.0 + std::cos(2.0 * kPi * t / kWidth));
    h[p] += gain * win * sinc(kPi * t);
  }
}

void check_inside(const std::array<double, 3>& p, const std::array<double, 3>& dims,
                  const char* what) {
  for (int i = 0; i < 3; ++i)
    if (p[i] <= 0.0 || p[i] >= dims[i])
      throw std::invalid_argument(std::string(what) + " outside room");
}

}  // namespace

ImpulseResponse generate_rir(const RoomSpec& room, const SourcePlacement& source,
                             const ArrayGeometry& array, double sample_rate,
                             const RirOptions& options) {
  room.validate();
  array.validate();
  if (sample_rate <= 0.0) throw std::invalid_argument("sample_rate must be positive");
  check_inside(source.position, room.dimensions, "source");
  for (const auto& mic : array.mic_positions) check_inside(mic, room.dimensions, "microphone");

  const double c = room.speed_of_sound;
  const double lx = room.dimensions[0], ly = room.dimensions[1], lz = room.dimensions[2];
  const bool anechoic = room.t60 <= 0.0;

  double beta = 0.0;
  if (!anechoic) {
    const double volume = lx * ly * lz;
    const double surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    const double sabine_alpha = 24.0 * volume * std::log(10.0) / (c * surface * room.t60);
    if (sabine_alpha > 1.0) throw std::invalid_argument("absorption out of range");
    // The image-source decay follows Eyring's law, so invert that instead of
    // Sabine to land the simulated T60 on target.
    beta = std::exp(-0.5 * sabine_alpha);
  }

  double max_direct = 0.0;
  for (const auto& mic : array.mic_positions) {
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double diff = source.position[i] - mic[i];
      d2 += diff * diff;
    }
    const double dist = std::sqrt(d2);
    if (dist < 1e-3) throw std::invalid_argument("source coincides with a microphone");
    max_direct = std::max(max_direct, dist);
  }
  const double samples_per_meter = sample_rate / c;

  int taps = options.num_taps;
  if (taps <= 0) {
    const int direct = static_cast<int>(std::ceil(max_direct * samples_per_meter));
    const int tail = anechoic ? 0 : static_cast<int>(std::ceil(1.2 * room.t60 * sample_rate));
    taps = direct + tail + 2 * kSincHalfWidth + 8;
  }

  ImpulseResponse out;
  out.sample_rate = sample_rate;
  out.taps.assign(array.num_mics(), std::vector<double>(taps, 0.0));

  const double reach_m = (taps + kSincHalfWidth) / samples_per_meter;
  const int nx = anechoic ? 0 : static_cast<int>(std::ceil(reach_m / (2.0 * lx)));
  const int ny = anechoic ? 0 : static_cast<int>(std::ceil(reach_m / (2.0 * ly)));
  const int nz = anechoic ? 0 : static_cast<int>(std::ceil(reach_m / (2.0 * lz)));

  std::vector<double> beta_pow(2 * (nx + ny + nz) + 7, 1.0);
  for (size_t i = 1; i < beta_pow.size(); ++i) beta_pow[i] = beta_pow[i - 1] * beta;

  const double sx = source.position[0], sy = source.position[1], sz = source.position[2];
  for (int mic = 0; mic < array.num_mics(); ++mic) {
    std::vector<double>& h = out.taps[mic];
    const double rx = array.mic_positions[mic][0];
    const double ry = array.mic_positions[mic][1];
    const double rz = array.mic_positions[mic][2];

    for (int mx = -nx; mx <= nx; ++mx)
      for (int q = 0; q <= 1; ++q) {
        const double px = (1 - 2 * q) * sx - rx + 2.0 * mx * lx;
        const int refl_x = std::abs(mx - q) + std::abs(mx);
        const int ord_x = std::abs(2 * mx - q);
        for (int my = -ny; my <= ny; ++my)
          for (int j = 0; j <= 1; ++j) {
            const double py = (1 - 2 * j) * sy - ry + 2.0 * my * ly;
            const int refl_y = std::abs(my - j) + std::abs(my);
            const int ord_y = std::abs(2 * my - j);
            for (int mz = -nz; mz <= nz; ++mz)
              for (int k = 0; k <= 1; ++k) {
                if (anechoic && (mx | my | mz | q | j | k) != 0) continue;
                const int ord = ord_x + ord_y + std::abs(2 * mz - k);
                if (options.max_order >= 0 && ord > options.max_order) continue;
                const double pz = (1 - 2 * k) * sz - rz + 2.0 * mz * lz;
                const double dist = std::sqrt(px * px + py * py + pz * pz);
                const double delay = dist * samples_per_meter;
                if (delay - kSincHalfWidth >= taps) continue;
                const int refl = refl_x + refl_y + std::abs(mz - k) + std::abs(mz);
                const double gain = beta_pow[refl] / (4.0 * kPi * std::max(dist, 1e-6));
                add_fractional_tap(h, delay, gain);
              }
          }
      }
  }
  return out;
}

namespace {

// [start, end) window covering the direct arrival plus the early reflections,
// with the interpolation kernel kept whole on both sides.
std::pair<int, int> early_support(const std::vector<double>& taps, int early_samples) {
  int peak = 0;
  double best = 0.0;
  for (size_t i = 0; i < taps.size(); ++i) {
    const double a = std::abs(taps[i]);
    if (a > best) {
      best = a;
      peak = static_cast<int>(i);
    }
  }
  if (best == 0.0) return {0, 0};
  const int start = std::max(0, peak - kSincHalfWidth);
  const int end = std::min<int>(static_cast<int>(taps.size()), peak + early_samples + kSincHalfWidth + 1);
  return {start, end};
}

}  // namespace

TransferVector compute_rtf(const ImpulseResponse& rir, const ArrayGeometry& array,
                           const WindowSpec& spec, double early_window_s) {
  spec.validate();
  array.validate();
  const int m_count = rir.num_mics();
  if (m_count == 0) throw std::invalid_argument("empty impulse response");
  if (m_count != array.num_mics())
    throw std::invalid_argument("impulse response / array channel mismatch");
  const int ref = array.reference_index;
  const int early = static_cast<int>(std::llround(early_window_s * rir.sample_rate));
  const int bins = spec.num_bins();
  const int nfft = spec.fft_size;

  // Early transfer functions at the bin frequencies. Evaluated as a DTFT over
  // the absolute tap positions so inter-mic delays survive.
  std::vector<std::vector<cplx>> h(m_count, std::vector<cplx>(bins, cplx(0.0, 0.0)));
  for (int m = 0; m < m_count; ++m) {
    const auto [start, end] = early_support(rir.taps[m], early);
    if (start == end) throw std::invalid_argument("all-zero impulse response channel");
    for (int k = 0; k < bins; ++k) {
      cplx acc(0.0, 0.0);
      const double w = -2.0 * kPi * k / nfft;
      for (int n = start; n < end; ++n)
        acc += rir.taps[m][n] * std::polar(1.0, w * n);
      h[m][k] = acc;
    }
  }

  double ref_max = 0.0;
  for (int k = 0; k < bins; ++k) ref_max = std::max(ref_max, std::abs(h[ref][k]));
  const double floor_mag = 1e-9 * ref_max;

  TransferVector rtf;
  rtf.values.assign(bins, std::vector<cplx>(m_count));
  for (int k = 0; k < bins; ++k) {
    cplx denom = h[ref][k];
    const double mag = std::abs(denom);
    if (mag < floor_mag) denom = mag > 0.0 ? denom * (floor_mag / mag) : cplx(floor_mag, 0.0);
    for (int m = 0; m < m_count; ++m) rtf.values[k][m] = h[m][k] / denom;
    rtf.values[k][ref] = cplx(1.0, 0.0);
  }
  return rtf;
}

TransferVector steering_vector(double theta_deg, const ArrayGeometry& array,
                               const WindowSpec& spec, double sample_rate,
                               double speed_of_sound) {
  spec.validate();
  array.validate();
  if (theta_deg <= 0.0 || theta_deg >= 180.0)
    throw std::invalid_argument("steering angle must lie in (0, 180) degrees");
  double spacing = 0.0;
  if (!array.is_ula(&spacing))
    throw std::invalid_argument("steering vector requires a uniform linear array");

  const int bins = spec.num_bins();
  const int m_count = array.num_mics();
  const double cos_theta = std::cos(theta_deg * kPi / 180.0);

  TransferVector a;
  a.values.assign(bins, std::vector<cplx>(m_count));
  for (int k = 0; k < bins; ++k) {
    const double f_hz = k * sample_rate / spec.fft_size;
    const double phase_step = -2.0 * kPi * f_hz * spacing * cos_theta / speed_of_sound;
    for (int m = 0; m < m_count; ++m) a.values[k][m] = std::polar(1.0, phase_step * m);
  }
  return a;
}

std::vector<double> fft_convolve(const std::vector<double>& signal,
                                 const std::vector<double>& kernel, size_t out_len) {
  if (signal.empty() || kernel.empty()) return std::vector<double>(out_len, 0.0);
  const size_t full = signal.size() + kernel.size() - 1;
  size_t nfft = 1;
  while (nfft < full) nfft <<= 1;
  const size_t bins = nfft / 2 + 1;

  std::vector<double> a(nfft, 0.0), b(nfft, 0.0);
  std::copy(signal.begin(), signal.end(), a.begin());
  std::copy(kernel.begin(), kernel.end(), b.begin());
  std::vector<cplx> fa(bins), fb(bins);
  fft::rfft(a.data(), fa.data(), static_cast<int>(nfft));
  fft::rfft(b.data(), fb.data(), static_cast<int>(nfft));
  for (size_t i = 0; i < bins; ++i) fa[i] *= fb[i];
  std::vector<double> conv(nfft);
  fft::irfft(fa.data(), conv.data(), static_cast<int>(nfft));
  conv.resize(std::min(full, conv.size()));
  conv.resize(out_len, 0.0);
  return conv;
}

namespace {

double mean_square(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

}  // namespace

SceneSample synthesize_mixture(const std::vector<double>& target,
                               const std::vector<double>& interferer,
                               const ImpulseResponse& rir_target,
                               const ImpulseResponse& rir_interferer, int reference_mic,
                               const WindowSpec& spec, const MixtureOptions& options) {
  if (target.empty() || interferer.empty())
    throw std::invalid_argument("sources must be non-empty");
  if (rir_target.sample_rate != rir_interferer.sample_rate)
    throw std::invalid_argument("impulse responses disagree on sample rate");
  const int m_count = rir_target.num_mics();
  if (m_count == 0 || m_count != rir_interferer.num_mics())
    throw std::invalid_argument("impulse responses disagree on channel count");
  if (reference_mic < 0 || reference_mic >= m_count)
    throw std::invalid_argument("reference mic out of range");

  const size_t total = target.size();
  std::vector<double> interferer_fit = interferer;
  interferer_fit.resize(total, 0.0);

  std::vector<std::vector<double>> target_img(m_count), interferer_img(m_count);
  for (int m = 0; m < m_count; ++m) {
    target_img[m] = fft_convolve(target, rir_target.taps[m], total);
    interferer_img[m] = fft_convolve(interferer_fit, rir_interferer.taps[m], total);
  }

  const double p_target = mean_square(target_img[reference_mic]);
  const double p_interf = mean_square(interferer_img[reference_mic]);
  if (p_target <= 0.0 || p_interf <= 0.0)
    throw std::invalid_argument("cannot set SIR against zero-power source");

  const double gain = std::sqrt(p_target * db_to_power(-options.sir_db) / p_interf);
  for (int m = 0; m < m_count; ++m)
    for (double& v : interferer_img[m]) v *= gain;

  SceneSample scene;
  scene.sample_rate = rir_target.sample_rate;
  scene.reference_mic = reference_mic;
  scene.sir_db = options.sir_db;
  scene.snr_db = options.snr_db;
  scene.seed = options.seed;
  scene.mixture.sample_rate = rir_target.sample_rate;
  scene.mixture.channels.assign(m_count, std::vector<double>(total, 0.0));

  std::vector<std::vector<double>> noise(m_count);
  const bool with_noise = std::isfinite(options.snr_db);
  if (with_noise) {
    const double p_noise = p_target * db_to_power(-options.snr_db);
    Rng rng(derive_seed(options.seed, 0x6e6f697365ULL));
    for (int m = 0; m < m_count; ++m) {
      noise[m].resize(total);
      for (double& v : noise[m]) v = rng.normal();
      // exact per-channel calibration
      const double p_emp = mean_square(noise[m]);
      const double s = p_emp > 0.0 ? std::sqrt(p_noise / p_emp) : 0.0;
      for (double& v : noise[m]) v *= s;
    }
  }

  for (int m = 0; m < m_count; ++m)
    for (size_t i = 0; i < total; ++i)
      scene.mixture.channels[m][i] = target_img[m][i] + interferer_img[m][i] +
                                     (with_noise ? noise[m][i] : 0.0);

  // Early target image at the reference mic: the enhancement target.
  const int early = static_cast<int>(std::llround(options.early_window_s * rir_target.sample_rate));
  std::vector<double> early_rir(rir_target.taps[reference_mic].size(), 0.0);
  {
    const auto [start, end] = early_support(rir_target.taps[reference_mic], early);
    if (start == end) throw std::invalid_argument("all-zero target impulse response");
    for (int n = start; n < end; ++n) early_rir[n] = rir_target.taps[reference_mic][n];
  }
  scene.clean_reference = fft_convolve(target, early_rir, total);

  ArrayGeometry pseudo;
  pseudo.mic_positions.assign(m_count, {0, 0, 0});
  pseudo.reference_index = reference_mic;
  scene.rtf_target = compute_rtf(rir_target, pseudo, spec, options.early_window_s);
  scene.rtf_interferer = compute_rtf(rir_interferer, pseudo, spec, options.early_window_s);
  scene.vad = compute_vad(scene.clean_reference, spec, options.vad_threshold_db);

  scene.achieved_sir_db = power_to_db(p_target / mean_square(interferer_img[reference_mic]));
  scene.achieved_snr_db = with_noise
                              ? power_to_db(p_target / mean_square(noise[reference_mic]))
                              : std::numeric_limits<double>::infinity();
  scene.target_image_ref = std::move(target_img[reference_mic]);
  scene.interferer_image_ref = std::move(interferer_img[reference_mic]);
  if (with_noise) scene.noise_ref = std::move(noise[reference_mic]);
  return scene;
}

std::pair<SourcePlacement, SourcePlacement> sample_scene(Rng& rng,
                                                         const ScenePlacementConfig& config,
                                                         const RoomSpec& room,
                                                         const std::array<double, 3>& array_center) {
  room.validate();
  if (config.angle_min_deg >= config.angle_max_deg || config.radius_min_m > config.radius_max_m ||
      config.min_separation_deg < 0.0)
    throw std::invalid_argument("invalid placement config");

  std::vector<double> grid;
  if (config.grid_mode) {
    for (double a = config.angle_min_deg; a <= config.angle_max_deg + 1e-9; a += config.grid_step_deg)
      grid.push_back(a);
    if (grid.size() < 2) throw std::invalid_argument("grid mode needs at least two angles");
  }

  auto draw_angle = [&]() {
    return config.grid_mode ? grid[rng.uniform_int(grid.size())]
                            : rng.uniform(config.angle_min_deg, config.angle_max_deg);
  };
  auto inside = [&](const SourcePlacement& p) {
    for (int i = 0; i < 3; ++i)
      if (p.position[i] < config.wall_margin_m ||
          p.position[i] > room.dimensions[i] - config.wall_margin_m)
        return false;
    return true;
  };

  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    const double theta_s = draw_angle();
    const double theta_n = draw_angle();
    if (std::abs(theta_s - theta_n) < config.min_separation_deg) continue;
    const SourcePlacement target = SourcePlacement::polar(
        theta_s, rng.uniform(config.radius_min_m, config.radius_max_m), array_center);
    const SourcePlacement interferer = SourcePlacement::polar(
        theta_n, rng.uniform(config.radius_min_m, config.radius_max_m), array_center);
    if (!inside(target) || !inside(interferer)) continue;
    return {target, interferer};
  }
  throw std::runtime_error("could not satisfy placement constraints");
}

}  // namespace arrowbf
