#pragma once

#include "arrowbf/common.hpp"

namespace arrowbf {

// Built-in source material so the full pipeline runs with zero external data.

// A clip of given duration, silent except for an active_s-long burst of
// speech-shaped noise (lowpassed white noise with syllabic-rate amplitude
// modulation) inserted at a seeded random offset. The insert start sample is
// reported through insert_start when non-null.
std::vector<double> make_speech_like(Rng& rng, double sample_rate, double duration_s,
                                     double active_s, int* insert_start = nullptr);

// Full-duration tonal interferer: a few summed linear chirps plus a steady
// tone, music-like rather than speech-like.
std::vector<double> make_chirp_interferer(Rng& rng, double sample_rate, double duration_s);

}  // namespace arrowbf
