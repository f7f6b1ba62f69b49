#include "arrowbf/localize.hpp"

#include <algorithm>
#include <cmath>

namespace arrowbf {

AngularGrid AngularGrid::fine(double lo, double hi, double step) {
  AngularGrid g;
  for (double a = lo; a <= hi + 1e-9; a += step) g.angles.push_back(a);
  g.validate();
  return g;
}

AngularGrid AngularGrid::coarse(double lo, double hi, double step) { return fine(lo, hi, step); }

void AngularGrid::validate() const {
  if (angles.empty()) throw std::invalid_argument("angular grid: empty");
  for (size_t i = 0; i < angles.size(); ++i) {
    if (angles[i] <= 0.0 || angles[i] >= 180.0)
      throw std::invalid_argument("angular grid: angles must lie in (0, 180)");
    if (i > 0 && angles[i] <= angles[i - 1])
      throw std::invalid_argument("angular grid: angles must be strictly increasing");
  }
}

namespace {

// Mean over bins of |W(frame)^H a_theta|; the per-frame, per-angle kernel.
double frame_response(const BeamWeights& w, int frame, const TransferVector& steering) {
  double acc = 0.0;
  const int bins = w.num_bins, mics = w.num_mics;
  for (int f = 0; f < bins; ++f) {
    cplx z(0.0, 0.0);
    const cplx* wrow = w.values.data() + w.index(frame, f, 0);
    const std::vector<cplx>& a = steering.values[f];
    for (int m = 0; m < mics; ++m) z += std::conj(wrow[m]) * a[m];
    acc += std::abs(z);
  }
  return acc / bins;
}

}  // namespace

Beampattern beampattern(const BeamWeights& weights, const AngularGrid& grid, const VadMask& vad,
                        const ArrayGeometry& array, const WindowSpec& spec, double sample_rate,
                        double speed_of_sound) {
  weights.validate();
  grid.validate();
  if (weights.num_bins != spec.num_bins())
    throw std::invalid_argument("beampattern: weights do not match the window spec");
  if (weights.time_varying && weights.num_frames != vad.frames())
    throw std::invalid_argument("beampattern: weights frames do not match the VAD");
  const int present = vad.present_count();
  if (present < 1) throw std::runtime_error("no active frames");

  Beampattern bp;
  bp.grid = grid;
  bp.values.resize(grid.angles.size());
  for (size_t g = 0; g < grid.angles.size(); ++g) {
    const TransferVector a = steering_vector(grid.angles[g], array, spec, sample_rate, speed_of_sound);
    if (!weights.time_varying) {
      bp.values[g] = frame_response(weights, 0, a);
    } else {
      double acc = 0.0;
      for (int l = 0; l < weights.num_frames; ++l)
        if (vad.active[l]) acc += frame_response(weights, l, a);
      bp.values[g] = acc / present;
    }
  }
  return bp;
}

DoaEstimate estimate_doa(const Beampattern& pattern) {
  if (pattern.values.empty()) throw std::invalid_argument("estimate_doa: empty beampattern");
  size_t best = 0;
  for (size_t i = 1; i < pattern.values.size(); ++i)
    if (pattern.values[i] > pattern.values[best]) best = i;  // ties keep the smaller angle
  return DoaEstimate{pattern.grid.angles[best]};
}

std::vector<double> per_frame_doa(const BeamWeights& weights, const AngularGrid& grid,
                                  const VadMask& vad, const ArrayGeometry& array,
                                  const WindowSpec& spec, double sample_rate,
                                  double speed_of_sound, std::vector<int>* frame_indices_out) {
  weights.validate();
  grid.validate();
  if (weights.num_bins != spec.num_bins())
    throw std::invalid_argument("per_frame_doa: weights do not match the window spec");
  if (weights.time_varying && weights.num_frames != vad.frames())
    throw std::invalid_argument("per_frame_doa: weights frames do not match the VAD");

  std::vector<double> estimates;
  if (frame_indices_out != nullptr) frame_indices_out->clear();

  if (!weights.time_varying) {
    // Shared weights give every frame the same beampattern.
    double best_val = -1.0;
    double best_angle = grid.angles[0];
    for (double angle : grid.angles) {
      const TransferVector a = steering_vector(angle, array, spec, sample_rate, speed_of_sound);
      const double v = frame_response(weights, 0, a);
      if (v > best_val) {
        best_val = v;
        best_angle = angle;
      }
    }
    for (int l = 0; l < vad.frames(); ++l) {
      if (!vad.active[l]) continue;
      estimates.push_back(best_angle);
      if (frame_indices_out != nullptr) frame_indices_out->push_back(l);
    }
    return estimates;
  }

  std::vector<TransferVector> steerings;
  steerings.reserve(grid.angles.size());
  for (double angle : grid.angles)
    steerings.push_back(steering_vector(angle, array, spec, sample_rate, speed_of_sound));

  for (int l = 0; l < weights.num_frames; ++l) {
    if (!vad.active[l]) continue;
    double best_val = -1.0;
    double best_angle = grid.angles[0];
    for (size_t g = 0; g < steerings.size(); ++g) {
      const double v = frame_response(weights, l, steerings[g]);
      if (v > best_val) {
        best_val = v;
        best_angle = grid.angles[g];
      }
    }
    estimates.push_back(best_angle);
    if (frame_indices_out != nullptr) frame_indices_out->push_back(l);
  }
  return estimates;
}

double localization_accuracy(std::span<const double> estimates_deg, double truth_deg,
                             double tolerance_deg) {
  if (estimates_deg.empty()) throw std::invalid_argument("localization_accuracy: no estimates");
  size_t correct = 0;
  for (double e : estimates_deg)
    if (std::abs(e - truth_deg) < tolerance_deg) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(estimates_deg.size());
}

}  // namespace arrowbf
