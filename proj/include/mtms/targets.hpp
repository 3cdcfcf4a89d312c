// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include "mtms/common.hpp"
#include "mtms/signal.hpp"

namespace mtms {

// Per-frequency statistics of the instantaneous prior SNR in dB, fitted over
// a training corpus and reused verbatim at inference.
struct SnrStats {
  uint32_t version = 1;
  std::vector<double> mu;     // per-bin mean, dB
  std::vector<double> sigma;  // per-bin std, dB, floored at kSigmaMinDb
  int64_t n_frames = 0;

  int bins() const { return static_cast<int>(mu.size()); }
};

Matrix compute_irm(const ComplexSpectrogram& clean, const ComplexSpectrogram& noise);

Matrix instantaneous_prior_snr(const ComplexSpectrogram& clean,
                               const ComplexSpectrogram& noise);

// Streaming Welford accumulator over (clean, noise) pairs.
class SnrStatsAccumulator {
 public:
  explicit SnrStatsAccumulator(int bins);
  void add_pair(const ComplexSpectrogram& clean, const ComplexSpectrogram& noise);
  void add_xi(const Matrix& xi);
  SnrStats finalize() const;  // throws DataError on fewer than 2 frames

 private:
  int bins_;
  int64_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

SnrStats fit_compression_stats(const std::vector<const ComplexSpectrogram*>& cleans,
                               const std::vector<const ComplexSpectrogram*>& noises);

Matrix compress_snr(const Matrix& xi, const SnrStats& stats);
Matrix decompress_snr(const Matrix& xibar, const SnrStats& stats);

double normal_cdf(double z);
double normal_icdf(double p);  // p clamped to [kProbClamp, 1-kProbClamp]

}  // namespace mtms
