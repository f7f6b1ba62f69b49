#pragma once

#include <span>

#include "arrowbf/beamform.hpp"

namespace arrowbf {

struct AngularGrid {
  std::vector<double> angles;  // degrees, strictly increasing, inside (0, 180)

  static AngularGrid fine(double lo = 30.0, double hi = 150.0, double step = 1.0);
  static AngularGrid coarse(double lo = 30.0, double hi = 150.0, double step = 15.0);
  void validate() const;
};

struct Beampattern {
  std::vector<double> values;  // one per grid angle, >= 0
  AngularGrid grid;
};

struct DoaEstimate {
  double theta_hat = 0.0;
};

// Mean |W^H a_theta| over speech-active frames and all bins, per grid angle.
Beampattern beampattern(const BeamWeights& weights, const AngularGrid& grid, const VadMask& vad,
                        const ArrayGeometry& array, const WindowSpec& spec, double sample_rate,
                        double speed_of_sound = kSpeedOfSound);

// Peak of the beampattern; ties break toward the smaller angle.
DoaEstimate estimate_doa(const Beampattern& pattern);

// One estimate per speech-active frame (inactive frames carry none);
// frame_indices_out, when non-null, receives the frame index of each estimate.
std::vector<double> per_frame_doa(const BeamWeights& weights, const AngularGrid& grid,
                                  const VadMask& vad, const ArrayGeometry& array,
                                  const WindowSpec& spec, double sample_rate,
                                  double speed_of_sound = kSpeedOfSound,
                                  std::vector<int>* frame_indices_out = nullptr);

// Percentage of estimates with |estimate - truth| strictly below the
// tolerance.
double localization_accuracy(std::span<const double> estimates_deg, double truth_deg,
                             double tolerance_deg = 15.0);

}  // namespace arrowbf
