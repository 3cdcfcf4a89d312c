// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <vector>

#include "mtms/common.hpp"

namespace mtms {

enum class WindowKind { kHamming };

// Analysis settings. Only the 16 kHz / 20 ms / 10 ms / 320-point setting is
// exercised, but the struct is validated rather than hard-coded.
struct FrameConfig {
  int sample_rate = 16000;
  int frame_len = 320;
  int hop = 160;
  int fft_size = 320;
  WindowKind window = WindowKind::kHamming;

  int bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  int length() const { return static_cast<int>(samples.size()); }
};

// Row-major frames x bins complex matrix together with the config that
// produced it.
struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<std::complex<double>> data;
  FrameConfig cfg;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int t, int k, const FrameConfig& c)
      : frames(t), bins(k), data(static_cast<size_t>(t) * k), cfg(c) {}

  std::complex<double>& at(int t, int k) { return data[static_cast<size_t>(t) * bins + k]; }
  std::complex<double> at(int t, int k) const { return data[static_cast<size_t>(t) * bins + k]; }
};

struct SpectralViews {
  Matrix lps;    // T x K, ln(mag^2 + eps)
  Matrix mag;    // T x K
  Matrix phase;  // T x K, atan2(im, re), 0 at the origin
  Matrix ri;     // T x 2K, all real parts then all imaginary parts
};

std::vector<double> make_window(WindowKind kind, int len);

// Hamming-windowed frames, left-aligned, trailing partial frame dropped.
Matrix frame_signal(const Waveform& wave, const FrameConfig& cfg);

ComplexSpectrogram stft(const Waveform& wave, const FrameConfig& cfg);

// Overlap-add synthesis normalized by the per-sample sum of overlapped
// analysis windows; output length is (T-1)*hop + frame_len.
Waveform istft(const ComplexSpectrogram& spec);

SpectralViews spectral_views(const ComplexSpectrogram& spec);

namespace fft {

// In-place complex FFT for sizes whose factors are 2, 3 or 5 (other prime
// factors fall back to a direct DFT on that sub-length). Inverse includes the
// 1/N scale.
class Plan {
 public:
  explicit Plan(int n);
  int size() const { return n_; }
  void forward(std::complex<double>* x) const;
  void inverse(std::complex<double>* x) const;

 private:
  int n_;
  std::vector<std::complex<double>> twiddle_;
  void run(std::complex<double>* x) const;
};

// Smallest n' >= n with only {2,3,5} factors.
int next_fast_size(int n);

}  // namespace fft

}  // namespace mtms
