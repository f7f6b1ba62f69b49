#include "arrowbf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "arrowbf/synth.hpp"
#include "arrowbf/wav.hpp"

namespace arrowbf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

WindowKind window_from_name(const std::string& s) {
  if (s == "hamming") return WindowKind::kHamming;
  if (s == "hann") return WindowKind::kHann;
  if (s == "rect") return WindowKind::kRect;
  throw std::invalid_argument("unknown window kind: " + s);
}

WeightsInit init_from_name(const std::string& s) {
  if (s == "reference_selector") return WeightsInit::kReferenceSelector;
  if (s == "delay_and_sum") return WeightsInit::kDelayAndSum;
  if (s == "random") return WeightsInit::kRandom;
  throw std::invalid_argument("unknown optimizer init: " + s);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SceneRecord::SceneRecord()
    : baseline_output_si_snr_db(kNan), baseline_accuracy_pct(kNan), baseline_doa_error_deg(kNan) {}

MetricsReport::Cell::Cell() : mean_baseline_output_si_snr(kNan), mean_baseline_accuracy(kNan) {}

void ExperimentConfig::validate() const {
  if (scene_count < 0) throw std::invalid_argument("config: scene_count must be non-negative");
  if (num_mics < 1) throw std::invalid_argument("config: need at least one mic");
  if (reference_mic < 0 || reference_mic >= num_mics)
    throw std::invalid_argument("config: reference_mic out of range");
  if (t60_list.empty() || sir_list.empty() || snr_list.empty())
    throw std::invalid_argument("config: t60/sir/snr lists must be non-empty");
  if (duration_s <= 0 || insert_s <= 0 || insert_s > duration_s)
    throw std::invalid_argument("config: need 0 < insert_s <= duration_s");
  if (sample_rate <= 0) throw std::invalid_argument("config: sample_rate must be positive");
  if (workers < 1) throw std::invalid_argument("config: workers must be at least 1");
  stft.validate();
  optimizer.validate();
  for (double a : alpha_list)
    if (a < 0 || a > 1) throw std::invalid_argument("config: alpha values must lie in [0, 1]");
  for (double b : beta_list)
    if (b < 0 || b > 1) throw std::invalid_argument("config: beta values must lie in [0, 1]");
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config file not found: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig c;
  if (j.contains("room")) {
    const auto& r = j.at("room");
    if (r.contains("dimensions")) {
      const auto& d = r.at("dimensions");
      c.room_dims = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
    }
    maybe(r, "t60_list", c.t60_list);
  }
  if (j.contains("array")) {
    const auto& a = j.at("array");
    maybe(a, "num_mics", c.num_mics);
    maybe(a, "spacing", c.mic_spacing);
    maybe(a, "reference", c.reference_mic);
    if (a.contains("center")) {
      const auto& d = a.at("center");
      c.array_center = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
    }
  }
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    maybe(s, "count", c.scene_count);
    maybe(s, "duration_s", c.duration_s);
    maybe(s, "insert_s", c.insert_s);
    maybe(s, "angle_min_deg", c.placement.angle_min_deg);
    maybe(s, "angle_max_deg", c.placement.angle_max_deg);
    maybe(s, "radius_min_m", c.placement.radius_min_m);
    maybe(s, "radius_max_m", c.placement.radius_max_m);
    maybe(s, "min_separation_deg", c.placement.min_separation_deg);
    maybe(s, "grid_mode", c.placement.grid_mode);
    maybe(s, "max_order", c.max_order);
    maybe(s, "early_window_s", c.early_window_s);
    maybe(s, "source_dir", c.source_dir);
  }
  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    maybe(s, "window_length", c.stft.window_length);
    maybe(s, "hop_length", c.stft.hop_length);
    maybe(s, "fft_size", c.stft.fft_size);
    if (s.contains("kind")) c.stft.window_kind = window_from_name(s.at("kind").get<std::string>());
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    maybe(o, "learning_rate", c.optimizer.learning_rate);
    maybe(o, "max_iters", c.optimizer.max_iters);
    maybe(o, "beta1", c.optimizer.beta1);
    maybe(o, "beta2", c.optimizer.beta2);
    maybe(o, "epsilon", c.optimizer.epsilon);
    maybe(o, "time_varying", c.optimizer.time_varying);
    maybe(o, "early_stop_delta", c.optimizer.early_stop_delta);
    maybe(o, "early_stop_patience", c.optimizer.early_stop_patience);
    maybe(o, "init_angle_deg", c.optimizer.init_angle_deg);
    maybe(o, "init_seed", c.optimizer.init_seed);
    if (o.contains("init")) c.optimizer.init = init_from_name(o.at("init").get<std::string>());
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    maybe(l, "alpha", c.optimizer.alpha);
    maybe(l, "beta", c.optimizer.beta);
    maybe(l, "alpha_list", c.alpha_list);
    maybe(l, "beta_list", c.beta_list);
    maybe(l, "vad_threshold_db", c.vad_threshold_db);
  }
  if (j.contains("mix")) {
    const auto& m = j.at("mix");
    maybe(m, "sir_list_db", c.sir_list);
    maybe(m, "snr_list_db", c.snr_list);
  }
  maybe(j, "sample_rate", c.sample_rate);
  maybe(j, "seed", c.seed);
  maybe(j, "workers", c.workers);
  maybe(j, "fine_grid", c.fine_grid);
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["room"] = {{"dimensions", {room_dims[0], room_dims[1], room_dims[2]}}, {"t60_list", t60_list}};
  j["array"] = {{"num_mics", num_mics},
                {"spacing", mic_spacing},
                {"reference", reference_mic},
                {"center", {array_center[0], array_center[1], array_center[2]}}};
  j["scene"] = {{"count", scene_count},
                {"duration_s", duration_s},
                {"insert_s", insert_s},
                {"angle_min_deg", placement.angle_min_deg},
                {"angle_max_deg", placement.angle_max_deg},
                {"radius_min_m", placement.radius_min_m},
                {"radius_max_m", placement.radius_max_m},
                {"min_separation_deg", placement.min_separation_deg},
                {"grid_mode", placement.grid_mode},
                {"max_order", max_order},
                {"early_window_s", early_window_s},
                {"source_dir", source_dir}};
  j["stft"] = {{"window_length", stft.window_length},
               {"hop_length", stft.hop_length},
               {"fft_size", stft.fft_size}};
  j["optimizer"] = {{"learning_rate", optimizer.learning_rate},
                    {"max_iters", optimizer.max_iters},
                    {"time_varying", optimizer.time_varying}};
  j["loss"] = {{"alpha", optimizer.alpha},
               {"beta", optimizer.beta},
               {"alpha_list", alpha_list},
               {"beta_list", beta_list},
               {"vad_threshold_db", vad_threshold_db}};
  j["mix"] = {{"sir_list_db", sir_list}, {"snr_list_db", snr_list}};
  j["sample_rate"] = sample_rate;
  j["seed"] = seed;
  j["workers"] = workers;
  j["fine_grid"] = fine_grid;
  return j.dump(2);
}

void run_parallel(int count, int workers, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

std::vector<std::string> list_wavs(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::invalid_argument("no .wav files in source dir: " + dir);
  return out;
}

std::vector<double> crop_or_tile(const std::vector<double>& x, size_t len, Rng& rng) {
  if (x.size() >= len) {
    const size_t slack = x.size() - len;
    const size_t start = slack > 0 ? static_cast<size_t>(rng.uniform_int(slack + 1)) : 0;
    return std::vector<double>(x.begin() + start, x.begin() + start + len);
  }
  std::vector<double> out(len);
  for (size_t i = 0; i < len; ++i) out[i] = x[i % x.size()];
  return out;
}

std::vector<double> source_from_dir(const std::vector<std::string>& files, Rng& rng,
                                    double sample_rate, size_t len) {
  const std::string& path = files[rng.uniform_int(files.size())];
  const WavData wav = read_wav(path);
  if (wav.sample_rate != sample_rate)
    throw std::invalid_argument("source WAV sample rate mismatch (resampling unsupported): " + path);
  if (wav.channels.empty() || wav.channels[0].empty())
    throw std::invalid_argument("empty source WAV: " + path);
  return crop_or_tile(wav.channels[0], len, rng);
}

// 4-s active clip placed at a random offset inside the 6-s scene span.
std::vector<double> build_target(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& source_files, Rng& rng) {
  const size_t total = static_cast<size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  if (source_files.empty()) return make_speech_like(rng, cfg.sample_rate, cfg.duration_s, cfg.insert_s);
  const size_t active = std::min(total, static_cast<size_t>(std::llround(cfg.insert_s * cfg.sample_rate)));
  const std::vector<double> clip = source_from_dir(source_files, rng, cfg.sample_rate, active);
  std::vector<double> out(total, 0.0);
  const size_t start = total > active ? static_cast<size_t>(rng.uniform_int(total - active + 1)) : 0;
  std::copy(clip.begin(), clip.end(), out.begin() + start);
  return out;
}

std::vector<double> build_interferer(const ExperimentConfig& cfg,
                                     const std::vector<std::string>& source_files, Rng& rng) {
  const size_t total = static_cast<size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  if (source_files.empty()) return make_chirp_interferer(rng, cfg.sample_rate, cfg.duration_s);
  return source_from_dir(source_files, rng, cfg.sample_rate, total);
}

}  // namespace

Manifest run_simulate(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  const ArrayGeometry base_array =
      ArrayGeometry::ula(config.num_mics, config.mic_spacing, config.array_center);
  ArrayGeometry array = base_array;
  array.reference_index = config.reference_mic;

  std::vector<std::string> source_files;
  if (!config.source_dir.empty()) source_files = list_wavs(config.source_dir);

  Manifest manifest;
  manifest.seed = config.seed;
  manifest.scenes.resize(config.scene_count);

  run_parallel(config.scene_count, config.workers, [&](int i) {
    const uint64_t scene_seed = derive_seed(config.seed, static_cast<uint64_t>(i));
    Rng rng(scene_seed);
    const double t60 = config.t60_list[rng.uniform_int(config.t60_list.size())];
    const double sir = config.sir_list[rng.uniform_int(config.sir_list.size())];
    const double snr = config.snr_list[rng.uniform_int(config.snr_list.size())];

    RoomSpec room;
    room.dimensions = config.room_dims;
    room.t60 = t60;
    const auto [target_p, interferer_p] =
        sample_scene(rng, config.placement, room, config.array_center);

    const std::vector<double> target = build_target(config, source_files, rng);
    const std::vector<double> interferer = build_interferer(config, source_files, rng);

    RirOptions rir_opt;
    rir_opt.max_order = config.max_order;
    const ImpulseResponse rir_s = generate_rir(room, target_p, array, config.sample_rate, rir_opt);
    const ImpulseResponse rir_n =
        generate_rir(room, interferer_p, array, config.sample_rate, rir_opt);

    MixtureOptions mix;
    mix.sir_db = sir;
    mix.snr_db = snr;
    mix.seed = scene_seed;
    mix.early_window_s = config.early_window_s;
    mix.vad_threshold_db = config.vad_threshold_db;
    SceneSample scene = synthesize_mixture(target, interferer, rir_s, rir_n,
                                           config.reference_mic, config.stft, mix);
    scene.target_placement = target_p;
    scene.interferer_placement = interferer_p;
    scene.t60 = t60;

    char id[32];
    std::snprintf(id, sizeof(id), "scene_%04d", i);
    manifest.scenes[i] = save_scene(out_dir, id, scene, array, config.stft, room);
  });

  save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

EnhanceOutputs run_enhance(const SceneFiles& files, const ExperimentConfig& config,
                           const std::string& out_dir) {
  const LoadedScene loaded = load_scene(files);
  fs::create_directories(out_dir);

  OptimizerConfig opt = config.optimizer;
  EnhanceOutputs out;
  out.result = optimize_weights(loaded.scene, opt, loaded.spec, &loaded.array);

  const Spectrogram mixture_spec = stft(loaded.scene.mixture, loaded.spec);
  const Spectrogram enhanced_spec = apply_beamformer(out.result.weights, mixture_spec);
  MultichannelWaveform enhanced = istft(enhanced_spec);
  enhanced.channels[0].resize(loaded.scene.mixture.num_samples(), 0.0);

  const std::string base = (fs::path(out_dir) / files.id).string();
  out.enhanced_wav = base + "_enhanced.wav";
  out.weights_file = base + "_weights.json";
  out.trace_csv = base + "_loss.csv";
  write_wav(out.enhanced_wav, WavData{{enhanced.channels[0]}, loaded.scene.sample_rate},
            WavFormat::kFloat32);
  save_weights(out.weights_file, out.result.weights, loaded.spec, loaded.scene.sample_rate);

  std::ostringstream csv;
  csv << "iteration,combined,si_snr,arrow\n";
  for (size_t i = 0; i < out.result.loss_trace.size(); ++i)
    csv << i << ',' << fmt(out.result.loss_trace[i]) << ',' << fmt(out.result.si_snr_trace[i])
        << ',' << fmt(out.result.arrow_trace[i]) << '\n';
  atomic_write_text(out.trace_csv, csv.str());

  const SceneTensors tensors = SceneTensors::from_scene(loaded.scene, loaded.spec);
  const size_t span = tensors.clean_reference.size();
  std::vector<double> ref_channel(
      loaded.scene.mixture.channels[loaded.scene.reference_mic].begin(),
      loaded.scene.mixture.channels[loaded.scene.reference_mic].begin() + span);
  out.input_si_snr_db = -si_snr_loss(ref_channel, tensors.clean_reference).first;
  out.output_si_snr_db = -out.result.best_breakdown.si_snr_loss;
  return out;
}

LocalizeOutputs run_localize(const std::string& weights_path, const std::string& sidecar_path,
                             bool fine_grid, const std::string& out_dir) {
  WindowSpec spec;
  double sample_rate = 0.0;
  const BeamWeights weights = load_weights(weights_path, &spec, &sample_rate);

  SceneFiles files;
  files.sidecar = sidecar_path;
  std::ifstream f(sidecar_path);
  if (!f) throw std::invalid_argument("sidecar not found: " + sidecar_path);
  json j;
  f >> j;

  ArrayGeometry array;
  for (const auto& p : j.at("array").at("mic_positions"))
    array.mic_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  array.reference_index = j.at("array").value("reference_index", 0);
  VadMask vad;
  vad.active = j.at("vad").get<std::vector<uint8_t>>();
  std::optional<double> truth;
  if (j.contains("target") && j.at("target").contains("angle_deg"))
    truth = j.at("target").at("angle_deg").get<double>();

  const AngularGrid grid = fine_grid ? AngularGrid::fine() : AngularGrid::coarse();
  const Beampattern bp = beampattern(weights, grid, vad, array, spec, sample_rate);
  const DoaEstimate est = estimate_doa(bp);
  std::vector<int> frame_indices;
  const std::vector<double> per_frame =
      per_frame_doa(weights, grid, vad, array, spec, sample_rate, kSpeedOfSound, &frame_indices);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(weights_path).stem().string();
  LocalizeOutputs out;
  out.theta_hat = est.theta_hat;
  out.doa_json = (fs::path(out_dir) / (stem + "_doa.json")).string();
  out.beampattern_csv = (fs::path(out_dir) / (stem + "_beampattern.csv")).string();

  json r;
  r["theta_hat_deg"] = est.theta_hat;
  r["per_frame_deg"] = per_frame;
  r["frame_indices"] = frame_indices;
  if (truth.has_value()) {
    r["truth_deg"] = *truth;
    if (!per_frame.empty()) {
      out.accuracy_pct = localization_accuracy(per_frame, *truth);
      r["accuracy_pct"] = *out.accuracy_pct;
    }
  }
  atomic_write_text(out.doa_json, r.dump(2));

  std::ostringstream csv;
  csv << "angle_deg,value\n";
  for (size_t i = 0; i < bp.values.size(); ++i)
    csv << fmt(bp.grid.angles[i]) << ',' << fmt(bp.values[i]) << '\n';
  atomic_write_text(out.beampattern_csv, csv.str());
  return out;
}

namespace {

struct SceneEvaluation {
  std::vector<SceneRecord> records;
};

SceneRecord evaluate_one(const LoadedScene& loaded, const SceneTensors& tensors,
                         const ExperimentConfig& config, const std::string& id, double alpha,
                         double beta, bool with_baseline, double input_si_snr) {
  SceneRecord rec;
  rec.scene_id = id;
  rec.alpha = alpha;
  rec.beta = beta;
  rec.sir_db = loaded.scene.sir_db;
  rec.snr_db = loaded.scene.snr_db;
  rec.t60 = loaded.scene.t60;
  rec.input_si_snr_db = input_si_snr;

  const int bins = tensors.mixture.num_bins;
  const int mics = tensors.mixture.num_channels;
  const BeamWeights init =
      BeamWeights::reference_selector(bins, mics, loaded.scene.reference_mic);

  OptimizerConfig opt = config.optimizer;
  opt.alpha = alpha;
  opt.beta = beta;
  const OptimizeResult res = optimize_weights(tensors, opt, init);

  rec.combined_loss = res.best_loss;
  rec.output_si_snr_db = -res.best_breakdown.si_snr_loss;
  rec.improvement_db = rec.output_si_snr_db - rec.input_si_snr_db;
  rec.residual_mean =
      distortionless_residual(res.weights, tensors.rtf_target, res.best_breakdown.eta)
          .mean_residual;

  const AngularGrid grid = config.fine_grid ? AngularGrid::fine() : AngularGrid::coarse();
  const double truth = loaded.scene.target_placement.angle_deg;
  const Beampattern bp =
      beampattern(res.weights, grid, tensors.vad, loaded.array, loaded.spec, loaded.scene.sample_rate);
  rec.doa_deg = estimate_doa(bp).theta_hat;
  rec.doa_error_deg = std::abs(rec.doa_deg - truth);
  const std::vector<double> per_frame = per_frame_doa(res.weights, grid, tensors.vad, loaded.array,
                                                      loaded.spec, loaded.scene.sample_rate);
  rec.accuracy_pct = per_frame.empty() ? 0.0 : localization_accuracy(per_frame, truth);

  if (with_baseline) {
    OptimizerConfig bopt = opt;
    bopt.beta = 1.0;
    const OptimizeResult bres = optimize_weights(tensors, bopt, init);
    rec.baseline_output_si_snr_db = -bres.best_breakdown.si_snr_loss;
    const std::vector<double> bframes = per_frame_doa(
        bres.weights, grid, tensors.vad, loaded.array, loaded.spec, loaded.scene.sample_rate);
    rec.baseline_accuracy_pct = bframes.empty() ? 0.0 : localization_accuracy(bframes, truth);
    rec.baseline_doa_error_deg = std::abs(
        estimate_doa(beampattern(bres.weights, grid, tensors.vad, loaded.array, loaded.spec,
                                 loaded.scene.sample_rate))
            .theta_hat -
        truth);
  }
  return rec;
}

}  // namespace

MetricsReport run_evaluate(const std::string& manifest_path, const ExperimentConfig& config,
                           bool with_baseline, const std::string& out_dir) {
  config.validate();
  const Manifest manifest = load_manifest(manifest_path);
  fs::create_directories(out_dir);

  const std::vector<double> alphas =
      config.alpha_list.empty() ? std::vector<double>{config.optimizer.alpha} : config.alpha_list;
  const std::vector<double> betas =
      config.beta_list.empty() ? std::vector<double>{config.optimizer.beta} : config.beta_list;

  const int n_scenes = static_cast<int>(manifest.scenes.size());
  std::vector<SceneEvaluation> evals(n_scenes);

  run_parallel(n_scenes, config.workers, [&](int i) {
    const SceneFiles& files = manifest.scenes[i];
    try {
      const LoadedScene loaded = load_scene(files);
      const SceneTensors tensors = SceneTensors::from_scene(loaded.scene, loaded.spec);
      const size_t span = tensors.clean_reference.size();
      std::vector<double> ref_channel(
          loaded.scene.mixture.channels[loaded.scene.reference_mic].begin(),
          loaded.scene.mixture.channels[loaded.scene.reference_mic].begin() + span);
      const double input_si_snr = -si_snr_loss(ref_channel, tensors.clean_reference).first;
      for (double a : alphas)
        for (double b : betas)
          evals[i].records.push_back(
              evaluate_one(loaded, tensors, config, files.id, a, b, with_baseline, input_si_snr));
    } catch (const std::exception& e) {
      SceneRecord rec;
      rec.scene_id = files.id;
      rec.error = e.what();
      evals[i].records.push_back(rec);
    }
  });

  MetricsReport report;
  for (const SceneEvaluation& ev : evals)
    report.records.insert(report.records.end(), ev.records.begin(), ev.records.end());

  // aggregate per (sir, t60, alpha, beta) cell, in record order
  for (const SceneRecord& rec : report.records) {
    if (!rec.error.empty()) continue;
    auto match = std::find_if(report.cells.begin(), report.cells.end(), [&](const auto& c) {
      return c.sir_db == rec.sir_db && c.t60 == rec.t60 && c.alpha == rec.alpha &&
             c.beta == rec.beta;
    });
    if (match == report.cells.end()) {
      report.cells.emplace_back();
      match = report.cells.end() - 1;
      match->sir_db = rec.sir_db;
      match->t60 = rec.t60;
      match->alpha = rec.alpha;
      match->beta = rec.beta;
    }
    ++match->count;
    match->mean_input_si_snr += rec.input_si_snr_db;
    match->mean_output_si_snr += rec.output_si_snr_db;
    match->mean_improvement += rec.improvement_db;
    match->mean_accuracy += rec.accuracy_pct;
    match->mean_residual += rec.residual_mean;
    if (with_baseline) {
      if (std::isnan(match->mean_baseline_output_si_snr)) {
        match->mean_baseline_output_si_snr = 0.0;
        match->mean_baseline_accuracy = 0.0;
      }
      match->mean_baseline_output_si_snr += rec.baseline_output_si_snr_db;
      match->mean_baseline_accuracy += rec.baseline_accuracy_pct;
    }
  }
  for (auto& c : report.cells) {
    c.mean_input_si_snr /= c.count;
    c.mean_output_si_snr /= c.count;
    c.mean_improvement /= c.count;
    c.mean_accuracy /= c.count;
    c.mean_residual /= c.count;
    if (!std::isnan(c.mean_baseline_output_si_snr)) {
      c.mean_baseline_output_si_snr /= c.count;
      c.mean_baseline_accuracy /= c.count;
    }
  }

  json jr;
  jr["config"] = json::parse(config.to_json_text());
  jr["records"] = json::array();
  for (const SceneRecord& r : report.records) {
    json row;
    row["scene_id"] = r.scene_id;
    if (!r.error.empty()) {
      row["error"] = r.error;
      jr["records"].push_back(std::move(row));
      continue;
    }
    row["alpha"] = r.alpha;
    row["beta"] = r.beta;
    row["sir_db"] = r.sir_db;
    row["snr_db"] = r.snr_db;
    row["t60"] = r.t60;
    row["input_si_snr_db"] = r.input_si_snr_db;
    row["output_si_snr_db"] = r.output_si_snr_db;
    row["improvement_db"] = r.improvement_db;
    row["residual_mean"] = r.residual_mean;
    row["doa_deg"] = r.doa_deg;
    row["doa_error_deg"] = r.doa_error_deg;
    row["accuracy_pct"] = r.accuracy_pct;
    row["combined_loss"] = r.combined_loss;
    if (!std::isnan(r.baseline_output_si_snr_db)) {
      row["baseline_output_si_snr_db"] = r.baseline_output_si_snr_db;
      row["baseline_accuracy_pct"] = r.baseline_accuracy_pct;
      row["baseline_doa_error_deg"] = r.baseline_doa_error_deg;
    }
    jr["records"].push_back(std::move(row));
  }
  jr["aggregates"] = json::array();
  for (const auto& c : report.cells) {
    json cell;
    cell["sir_db"] = c.sir_db;
    cell["t60"] = c.t60;
    cell["alpha"] = c.alpha;
    cell["beta"] = c.beta;
    cell["count"] = c.count;
    cell["mean_input_si_snr_db"] = c.mean_input_si_snr;
    cell["mean_output_si_snr_db"] = c.mean_output_si_snr;
    cell["mean_improvement_db"] = c.mean_improvement;
    cell["mean_accuracy_pct"] = c.mean_accuracy;
    cell["mean_residual"] = c.mean_residual;
    if (!std::isnan(c.mean_baseline_output_si_snr)) {
      cell["mean_baseline_output_si_snr_db"] = c.mean_baseline_output_si_snr;
      cell["mean_baseline_accuracy_pct"] = c.mean_baseline_accuracy;
    }
    jr["aggregates"].push_back(std::move(cell));
  }

  report.report_json = (fs::path(out_dir) / "report.json").string();
  report.report_csv = (fs::path(out_dir) / "report.csv").string();
  report.aggregates_csv = (fs::path(out_dir) / "aggregates.csv").string();
  atomic_write_text(report.report_json, jr.dump(2));

  std::ostringstream csv;
  csv << "scene_id,alpha,beta,sir_db,snr_db,t60,input_si_snr_db,output_si_snr_db,"
         "improvement_db,residual_mean,doa_deg,doa_error_deg,accuracy_pct,combined_loss,"
         "baseline_output_si_snr_db,baseline_accuracy_pct,error\n";
  for (const SceneRecord& r : report.records) {
    csv << r.scene_id << ',' << fmt(r.alpha) << ',' << fmt(r.beta) << ',' << fmt(r.sir_db) << ','
        << fmt(r.snr_db) << ',' << fmt(r.t60) << ',' << fmt(r.input_si_snr_db) << ','
        << fmt(r.output_si_snr_db) << ',' << fmt(r.improvement_db) << ',' << fmt(r.residual_mean)
        << ',' << fmt(r.doa_deg) << ',' << fmt(r.doa_error_deg) << ',' << fmt(r.accuracy_pct)
        << ',' << fmt(r.combined_loss) << ',' << fmt(r.baseline_output_si_snr_db) << ','
        << fmt(r.baseline_accuracy_pct) << ',' << r.error << '\n';
  }
  atomic_write_text(report.report_csv, csv.str());

  std::ostringstream acsv;
  acsv << "sir_db,t60,alpha,beta,count,mean_input_si_snr_db,mean_output_si_snr_db,"
          "mean_improvement_db,mean_accuracy_pct,mean_residual,"
          "mean_baseline_output_si_snr_db,mean_baseline_accuracy_pct\n";
  for (const auto& c : report.cells) {
    acsv << fmt(c.sir_db) << ',' << fmt(c.t60) << ',' << fmt(c.alpha) << ',' << fmt(c.beta) << ','
         << c.count << ',' << fmt(c.mean_input_si_snr) << ',' << fmt(c.mean_output_si_snr) << ','
         << fmt(c.mean_improvement) << ',' << fmt(c.mean_accuracy) << ',' << fmt(c.mean_residual)
         << ',' << fmt(c.mean_baseline_output_si_snr) << ',' << fmt(c.mean_baseline_accuracy)
         << '\n';
  }
  atomic_write_text(report.aggregates_csv, acsv.str());
  return report;
}

namespace {

// Check scenes must sit safely away from the |.| kinks so that the central
// difference never straddles one; the margin is generous against the 1e-6
// step times a unit direction.
double kink_margin(const SceneTensors& tensors, const BeamWeights& weights) {
  double margin = std::numeric_limits<double>::infinity();
  for (int f = 0; f < weights.num_bins; ++f) {
    cplx zs(0.0, 0.0), zn(0.0, 0.0);
    for (int m = 0; m < weights.num_mics; ++m) {
      zs += std::conj(weights.get(0, f, m)) * tensors.rtf_target.values[f][m];
      zn += std::conj(weights.get(0, f, m)) * tensors.rtf_interferer.values[f][m];
    }
    margin = std::min({margin, std::abs(zs.imag()), std::abs(zn.real()), std::abs(zn.imag())});
  }
  return margin;
}

}  // namespace

LosscheckReport run_losscheck(uint64_t seed, const LosscheckOptions& options) {
  LosscheckReport report;
  report.tolerance = options.tolerance;

  const WindowSpec spec;
  const double fs = 16000.0;
  const std::array<double, 3> array_center{3.0, 0.6, 1.5};
  const ArrayGeometry array = ArrayGeometry::ula(4, 0.08, array_center);
  const ScenePlacementConfig placement;

  const std::array<std::pair<double, double>, 4> term_weights = {
      std::make_pair(0.5, 1.0),  // si-snr only
      std::make_pair(1.0, 0.0),  // target term only
      std::make_pair(0.0, 0.0),  // interferer term only
      std::make_pair(0.5, 0.5),  // combined
  };

  double worst = 0.0;
  for (int s = 0; s < options.scenes; ++s) {
    Rng rng(derive_seed(seed, 1000 + static_cast<uint64_t>(s)));
    RoomSpec room;
    room.t60 = 0.0;
    const auto [target_p, interferer_p] = sample_scene(rng, placement, room, array_center);
    const std::vector<double> target = make_speech_like(rng, fs, 1.0, 0.6);
    const std::vector<double> interferer = make_chirp_interferer(rng, fs, 1.0);
    const ImpulseResponse rir_s = generate_rir(room, target_p, array, fs);
    const ImpulseResponse rir_n = generate_rir(room, interferer_p, array, fs);
    MixtureOptions mix;
    mix.sir_db = rng.uniform(-10.0, 15.0);
    mix.snr_db = rng.uniform(20.0, 30.0);
    mix.seed = derive_seed(seed, 3000 + static_cast<uint64_t>(s));
    const SceneSample scene = synthesize_mixture(target, interferer, rir_s, rir_n, 0, spec, mix);
    const SceneTensors tensors = SceneTensors::from_scene(scene, spec);
    LossEngine engine(tensors);

    BeamWeights w = BeamWeights::random_init(tensors.mixture.num_bins,
                                             tensors.mixture.num_channels,
                                             derive_seed(seed, 2000 + static_cast<uint64_t>(s)), 1.0);
    Rng jitter_rng(derive_seed(seed, 4000 + static_cast<uint64_t>(s)));
    for (int tries = 0; kink_margin(tensors, w) < 1e-4; ++tries) {
      if (tries > 100) throw std::runtime_error("losscheck: could not move weights off a kink");
      for (auto& v : w.values) v += cplx(0.01 * jitter_rng.normal(), 0.01 * jitter_rng.normal());
    }

    LosscheckReport::Row row;
    row.scene = s;
    double* row_errs[4] = {&row.rel_err_si, &row.rel_err_target, &row.rel_err_interferer,
                           &row.rel_err_combined};
    for (size_t t = 0; t < term_weights.size(); ++t) {
      const LossWeights lw{term_weights[t].first, term_weights[t].second};
      std::vector<cplx> grad;
      engine.evaluate(w, lw, &grad);

      Rng dir_rng(derive_seed(seed, 5000 + 100 * static_cast<uint64_t>(s) + t));
      double max_err = 0.0;
      for (int d = 0; d < options.directions; ++d) {
        std::vector<cplx> direction(w.size());
        double norm = 0.0;
        for (auto& v : direction) {
          v = cplx(dir_rng.normal(), dir_rng.normal());
          norm += std::norm(v);
        }
        norm = std::sqrt(norm);
        for (auto& v : direction) v /= norm;

        double analytic = 0.0;
        for (size_t i = 0; i < grad.size(); ++i)
          analytic += grad[i].real() * direction[i].real() + grad[i].imag() * direction[i].imag();
        if (options.inject_sign_flip) analytic = -analytic;

        BeamWeights wp = w, wm = w;
        for (size_t i = 0; i < w.size(); ++i) {
          wp.values[i] += options.step * direction[i];
          wm.values[i] -= options.step * direction[i];
        }
        const double lp = engine.evaluate(wp, lw).combined;
        const double lm = engine.evaluate(wm, lw).combined;
        const double numeric = (lp - lm) / (2.0 * options.step);
        const double err = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-12);
        max_err = std::max(max_err, err);
      }
      *row_errs[t] = max_err;
      worst = std::max(worst, max_err);
    }
    report.rows.push_back(row);
  }
  report.worst = worst;
  report.pass = worst < options.tolerance;
  return report;
}

void print_losscheck(const LosscheckReport& report, std::ostream& os) {
  os << "scene  si_snr       target       interferer   combined\n";
  for (const auto& row : report.rows) {
    os << std::setw(5) << row.scene << "  " << std::scientific << std::setprecision(3)
       << row.rel_err_si << "    " << row.rel_err_target << "    " << row.rel_err_interferer
       << "    " << row.rel_err_combined << '\n';
  }
  os.unsetf(std::ios::scientific);
  os << "worst relative error: " << std::scientific << std::setprecision(3) << report.worst
     << " (tolerance " << report.tolerance << ") -> " << (report.pass ? "PASS" : "FAIL") << '\n';
  os.unsetf(std::ios::scientific);
}

}  // namespace arrowbf
