// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "mtms/mmse_lsa.hpp"
#include "mtms/model.hpp"
#include "mtms/signal.hpp"
#include "mtms/targets.hpp"

namespace mtms {

enum class EnhanceMode { kIrm, kRi, kPriSnr, kFused };

EnhanceMode parse_enhance_mode(const std::string& name);
std::string enhance_mode_name(EnhanceMode mode);

struct EnhanceOptions {
  EnhanceMode mode = EnhanceMode::kFused;
  // Feed stage two from the noisy magnitude alone instead of the stage-one
  // coupling (ablation variant of the prior-SNR path).
  bool prisnr_noisy_only = false;
};

// Masked magnitude: sqrt(exp(lps)) .* irm.
Matrix masked_magnitude(const Matrix& noisy_lps, const Matrix& irm_hat);

// Per-bin magnitude of a stacked real/imag matrix (T x 2K -> T x K).
Matrix ri_to_magnitude(const Matrix& ri);

// Average of the mask-derived and spectrum-derived magnitudes.
Matrix stage1_fused_magnitude(const Matrix& ri_hat, const Matrix& masked);

// Three-way arithmetic mean.
Matrix fuse_three(const Matrix& mag_ri, const Matrix& mag_irm, const Matrix& mag_prisnr);

// atan2 per bin, 0 at the origin.
Matrix phase_from_ri(const Matrix& ri_hat);

ComplexSpectrogram assemble_spectrogram(const Matrix& mag, const Matrix& phase,
                                        const FrameConfig& cfg);

// Full enhancement of one utterance. Requires fitted stats for the prisnr
// and fused modes. All-zero input short-circuits to an all-zero output of
// the reconstructable length.
Waveform enhance_utterance(const Waveform& noisy, Model& model, const SnrStats* stats,
                           const EnhanceOptions& opts,
                           const FrameConfig& cfg = FrameConfig{});

}  // namespace mtms
