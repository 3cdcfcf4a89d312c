// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace mtms {

EnhanceMode parse_enhance_mode(const std::string& name) {
  if (name == "irm") return EnhanceMode::kIrm;
  if (name == "ri") return EnhanceMode::kRi;
  if (name == "prisnr") return EnhanceMode::kPriSnr;
  if (name == "fused") return EnhanceMode::kFused;
  throw ConfigError("unknown enhance mode: " + name +
                    " (expected irm|ri|prisnr|fused)");
}

std::string enhance_mode_name(EnhanceMode mode) {
  switch (mode) {
    case EnhanceMode::kIrm: return "irm";
    case EnhanceMode::kRi: return "ri";
    case EnhanceMode::kPriSnr: return "prisnr";
    case EnhanceMode::kFused: return "fused";
  }
  return "?";
}

Matrix masked_magnitude(const Matrix& noisy_lps, const Matrix& irm_hat) {
  require_same_shape(noisy_lps, irm_hat, "masked_magnitude");
  Matrix out(noisy_lps.rows, noisy_lps.cols);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = std::sqrt(std::exp(noisy_lps.v[i])) * irm_hat.v[i];
  }
  return out;
}

Matrix ri_to_magnitude(const Matrix& ri) {
  if (ri.cols % 2 != 0) throw DimensionError("ri_to_magnitude: odd column count");
  const int k_n = ri.cols / 2;
  Matrix out(ri.rows, k_n);
  for (int t = 0; t < ri.rows; ++t) {
    for (int k = 0; k < k_n; ++k) {
      const double re = ri.at(t, k);
      const double im = ri.at(t, k_n + k);
      out.at(t, k) = std::sqrt(re * re + im * im);
    }
  }
  return out;
}

Matrix stage1_fused_magnitude(const Matrix& ri_hat, const Matrix& masked) {
  const Matrix mag_ri = ri_to_magnitude(ri_hat);
  require_same_shape(mag_ri, masked, "stage1_fused_magnitude");
  Matrix out(masked.rows, masked.cols);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = 0.5 * (mag_ri.v[i] + masked.v[i]);
  }
  return out;
}

Matrix fuse_three(const Matrix& mag_ri, const Matrix& mag_irm, const Matrix& mag_prisnr) {
  require_same_shape(mag_ri, mag_irm, "fuse_three");
  require_same_shape(mag_ri, mag_prisnr, "fuse_three");
  Matrix out(mag_ri.rows, mag_ri.cols);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = (mag_ri.v[i] + mag_irm.v[i] + mag_prisnr.v[i]) / 3.0;
  }
  return out;
}

Matrix phase_from_ri(const Matrix& ri_hat) {
  if (ri_hat.cols % 2 != 0) throw DimensionError("phase_from_ri: odd column count");
  const int k_n = ri_hat.cols / 2;
  Matrix out(ri_hat.rows, k_n);
  for (int t = 0; t < ri_hat.rows; ++t) {
    for (int k = 0; k < k_n; ++k) {
      const double re = ri_hat.at(t, k);
      const double im = ri_hat.at(t, k_n + k);
      out.at(t, k) = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
    }
  }
  return out;
}

ComplexSpectrogram assemble_spectrogram(const Matrix& mag, const Matrix& phase,
                                        const FrameConfig& cfg) {
  require_same_shape(mag, phase, "assemble_spectrogram");
  ComplexSpectrogram spec(mag.rows, mag.cols, cfg);
  for (int t = 0; t < mag.rows; ++t) {
    for (int k = 0; k < mag.cols; ++k) {
      spec.at(t, k) = std::polar(mag.at(t, k), phase.at(t, k));
    }
  }
  return spec;
}

Waveform enhance_utterance(const Waveform& noisy, Model& model, const SnrStats* stats,
                           const EnhanceOptions& opts, const FrameConfig& cfg) {
  cfg.validate();
  if (noisy.sample_rate != cfg.sample_rate) {
    throw FormatError("enhance_utterance: input sample rate " +
                      std::to_string(noisy.sample_rate) + ", expected " +
                      std::to_string(cfg.sample_rate));
  }
  if (model.spec().bins != cfg.bins() || model.spec().frame_len != cfg.frame_len) {
    throw ConfigError("enhance_utterance: model geometry does not match the frame config");
  }
  const bool needs_stats =
      opts.mode == EnhanceMode::kPriSnr || opts.mode == EnhanceMode::kFused;
  if (needs_stats && stats == nullptr) {
    throw ConfigError("enhance_utterance: mode " + enhance_mode_name(opts.mode) +
                      " requires fitted compression stats");
  }
  if (needs_stats && stats->bins() != cfg.bins()) {
    throw DimensionError("enhance_utterance: stats bin count mismatch");
  }

  const Matrix frames = frame_signal(noisy, cfg);
  const int out_len = (frames.rows - 1) * cfg.hop + cfg.frame_len;
  bool all_zero = true;
  for (double s : noisy.samples) {
    if (s != 0.0) {
      all_zero = false;
      break;
    }
  }
  if (all_zero) {
    Waveform out;
    out.sample_rate = cfg.sample_rate;
    out.samples.assign(out_len, 0.0);
    return out;
  }

  const ComplexSpectrogram spec = stft(noisy, cfg);
  const SpectralViews views = spectral_views(spec);

  Matrix mag;
  Matrix phase;
  if (opts.mode == EnhanceMode::kIrm || opts.mode == EnhanceMode::kRi) {
    const StageOneEval s1 = model.eval_stage1(frames, views.lps, views.ri);
    if (opts.mode == EnhanceMode::kIrm) {
      mag = masked_magnitude(views.lps, s1.irm_hat);
      phase = views.phase;
    } else {
      mag = ri_to_magnitude(s1.ri_hat);
      phase = phase_from_ri(s1.ri_hat);
    }
  } else {
    FullEval full;
    if (opts.prisnr_noisy_only) {
      const StageOneEval s1 = model.eval_stage1(frames, views.lps, views.ri);
      full.irm_hat = s1.irm_hat;
      full.ri_hat = s1.ri_hat;
      const Matrix noisy_mag = magnitude_from_lps(views.lps);
      full.xibar_hat = model.eval_stage2(noisy_mag, noisy_mag);
    } else {
      full = model.eval_full(frames, views.lps, views.ri);
    }
    const Matrix xi = decompress_snr(full.xibar_hat, *stats);
    const Matrix mag_prisnr = enhance_magnitude_mmse(views.lps, xi);
    if (opts.mode == EnhanceMode::kPriSnr) {
      mag = mag_prisnr;
      phase = views.phase;
    } else {
      const Matrix masked = masked_magnitude(views.lps, full.irm_hat);
      const Matrix mag_ri = ri_to_magnitude(full.ri_hat);
      mag = fuse_three(mag_ri, masked, mag_prisnr);
      phase = phase_from_ri(full.ri_hat);
    }
  }
  return istft(assemble_spectrogram(mag, phase, cfg));
}

}  // namespace mtms
