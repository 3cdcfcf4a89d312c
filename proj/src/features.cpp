// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/features.hpp"

namespace mtms {

namespace {

void narrow_into(const Matrix& src, std::vector<float>& dst) {
  dst.resize(src.v.size());
  for (size_t i = 0; i < src.v.size(); ++i) dst[i] = static_cast<float>(src.v[i]);
}

}  // namespace

FeatureBundle build_feature_bundle(const Waveform& clean, const Waveform& scaled_noise,
                                   const Waveform& noisy, const SnrStats& stats,
                                   const FrameConfig& cfg) {
  if (clean.length() != noisy.length() || scaled_noise.length() != noisy.length()) {
    throw DimensionError("build_feature_bundle: waveform lengths differ");
  }
  const Matrix frames = frame_signal(noisy, cfg);
  const ComplexSpectrogram noisy_spec = stft(noisy, cfg);
  const ComplexSpectrogram clean_spec = stft(clean, cfg);
  const ComplexSpectrogram noise_spec = stft(scaled_noise, cfg);
  const SpectralViews noisy_views = spectral_views(noisy_spec);
  const SpectralViews clean_views = spectral_views(clean_spec);

  FeatureBundle b;
  b.frames = noisy_spec.frames;
  b.bins = noisy_spec.bins;
  b.frame_len = cfg.frame_len;
  narrow_into(frames, b.win_frames);
  narrow_into(noisy_views.lps, b.lps);
  narrow_into(noisy_views.ri, b.ri);
  narrow_into(compute_irm(clean_spec, noise_spec), b.irm);
  narrow_into(clean_views.ri, b.clean_ri);
  narrow_into(compress_snr(instantaneous_prior_snr(clean_spec, noise_spec), stats),
              b.xibar);
  return b;
}

}  // namespace mtms
