// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "mtms/signal.hpp"
#include "mtms/targets.hpp"

namespace mtms {

// Per-utterance stack of model inputs and training targets, frame-major.
// Stored as float to keep desk-scale corpora cacheable; batches upcast.
struct FeatureBundle {
  int frames = 0;
  int bins = 0;
  int frame_len = 0;
  std::vector<float> win_frames;  // T x frame_len, Hamming-windowed
  std::vector<float> lps;         // T x bins, noisy
  std::vector<float> ri;          // T x 2*bins, noisy
  std::vector<float> irm;         // T x bins, target
  std::vector<float> clean_ri;    // T x 2*bins, target
  std::vector<float> xibar;       // T x bins, compressed prior SNR target
};

FeatureBundle build_feature_bundle(const Waveform& clean, const Waveform& scaled_noise,
                                   const Waveform& noisy, const SnrStats& stats,
                                   const FrameConfig& cfg);

}  // namespace mtms
