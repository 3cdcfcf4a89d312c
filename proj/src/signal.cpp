// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/signal.hpp"

#include <cmath>

namespace mtms {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void FrameConfig::validate() const {
  if (sample_rate != 16000) {
    throw ConfigError("FrameConfig: sample_rate must be 16000, got " +
                      std::to_string(sample_rate));
  }
  if (frame_len != fft_size) {
    throw ConfigError("FrameConfig: frame_len must equal fft_size");
  }
  if (hop * 2 != frame_len) {
    throw ConfigError("FrameConfig: hop must be frame_len/2");
  }
  if (frame_len <= 0) {
    throw ConfigError("FrameConfig: frame_len must be positive");
  }
}

std::vector<double> make_window(WindowKind kind, int len) {
  std::vector<double> w(len);
  switch (kind) {
    case WindowKind::kHamming:
      for (int n = 0; n < len; ++n) {
        w[n] = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (len - 1));
      }
      break;
  }
  return w;
}

Matrix frame_signal(const Waveform& wave, const FrameConfig& cfg) {
  cfg.validate();
  const int n = wave.length();
  if (n < cfg.frame_len) {
    throw LengthError("frame_signal: signal of " + std::to_string(n) +
                      " samples is shorter than one frame (" +
                      std::to_string(cfg.frame_len) + ")");
  }
  const int frames = (n - cfg.frame_len) / cfg.hop + 1;
  const std::vector<double> w = make_window(cfg.window, cfg.frame_len);
  Matrix out(frames, cfg.frame_len);
  for (int t = 0; t < frames; ++t) {
    const double* src = wave.samples.data() + static_cast<size_t>(t) * cfg.hop;
    double* dst = out.v.data() + static_cast<size_t>(t) * cfg.frame_len;
    for (int i = 0; i < cfg.frame_len; ++i) dst[i] = src[i] * w[i];
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& wave, const FrameConfig& cfg) {
  const Matrix frames = frame_signal(wave, cfg);
  const int k = cfg.bins();
  ComplexSpectrogram spec(frames.rows, k, cfg);
  fft::Plan plan(cfg.fft_size);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (int t = 0; t < frames.rows; ++t) {
    for (int i = 0; i < cfg.frame_len; ++i) buf[i] = frames.at(t, i);
    plan.forward(buf.data());
    for (int b = 0; b < k; ++b) spec.at(t, b) = buf[b];
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec) {
  spec.cfg.validate();
  if (spec.bins != spec.cfg.bins()) {
    throw DimensionError("istft: spectrogram has " + std::to_string(spec.bins) +
                         " bins, expected " + std::to_string(spec.cfg.bins()));
  }
  const FrameConfig& cfg = spec.cfg;
  const int n = cfg.fft_size;
  const int out_len = spec.frames > 0 ? (spec.frames - 1) * cfg.hop + cfg.frame_len : 0;
  const std::vector<double> w = make_window(cfg.window, cfg.frame_len);

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(out_len, 0.0);
  std::vector<double> weight(out_len, 0.0);

  fft::Plan plan(n);
  std::vector<std::complex<double>> buf(n);
  for (int t = 0; t < spec.frames; ++t) {
    buf[0] = spec.at(t, 0);
    for (int b = 1; b < spec.bins; ++b) {
      buf[b] = spec.at(t, b);
      if (n - b != b) buf[n - b] = std::conj(spec.at(t, b));
    }
    plan.inverse(buf.data());
    const int start = t * cfg.hop;
    for (int i = 0; i < cfg.frame_len; ++i) {
      out.samples[start + i] += buf[i].real();
      weight[start + i] += w[i];
    }
  }
  for (int i = 0; i < out_len; ++i) {
    out.samples[i] = weight[i] > kEpsFloor ? out.samples[i] / weight[i] : 0.0;
  }
  return out;
}

SpectralViews spectral_views(const ComplexSpectrogram& spec) {
  const int t_n = spec.frames;
  const int k_n = spec.bins;
  SpectralViews out;
  out.lps = Matrix(t_n, k_n);
  out.mag = Matrix(t_n, k_n);
  out.phase = Matrix(t_n, k_n);
  out.ri = Matrix(t_n, 2 * k_n);
  for (int t = 0; t < t_n; ++t) {
    for (int k = 0; k < k_n; ++k) {
      const std::complex<double> c = spec.at(t, k);
      const double re = c.real();
      const double im = c.imag();
      const double p = re * re + im * im;
      out.mag.at(t, k) = std::sqrt(p);
      out.lps.at(t, k) = std::log(p + kEpsFloor);
      out.phase.at(t, k) = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
      out.ri.at(t, k) = re;
      out.ri.at(t, k_n + k) = im;
    }
  }
  return out;
}

namespace fft {

namespace {

int smallest_factor(int n) {
  for (int f : {2, 3, 5}) {
    if (n % f == 0) return f;
  }
  for (int f = 7; f * f <= n; f += 2) {
    if (n % f == 0) return f;
  }
  return n;
}

// Recursive decimation-in-time. tw is the root table e^{-2*pi*i*j/N};
// at sub-length n the stride into it is N/n.
void fft_rec(std::complex<double>* x, int n, int stride,
             const std::complex<double>* tw, int root_n,
             std::complex<double>* scratch) {
  if (n == 1) return;
  const int f = smallest_factor(n);
  const int m = n / f;
  if (f == n) {
    // Direct DFT for a prime length.
    for (int k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (int j = 0; j < n; ++j) {
        acc += x[j] * tw[static_cast<long long>(k) * j % n * stride];
      }
      scratch[k] = acc;
    }
    for (int k = 0; k < n; ++k) x[k] = scratch[k];
    return;
  }
  for (int r = 0; r < f; ++r) {
    for (int j = 0; j < m; ++j) scratch[r * m + j] = x[static_cast<size_t>(j) * f + r];
  }
  for (int r = 0; r < f; ++r) {
    fft_rec(scratch + static_cast<size_t>(r) * m, m, stride * f, tw, root_n, x + static_cast<size_t>(r) * m);
  }
  for (int k = 0; k < n; ++k) {
    const int km = k % m;
    std::complex<double> acc = scratch[km];
    for (int r = 1; r < f; ++r) {
      const long long idx = static_cast<long long>(k) * r % n * stride;
      acc += tw[idx] * scratch[static_cast<size_t>(r) * m + km];
    }
    x[k] = acc;
  }
}

}  // namespace

Plan::Plan(int n) : n_(n), twiddle_(n) {
  if (n <= 0) throw DomainError("fft: size must be positive");
  for (int j = 0; j < n; ++j) {
    const double a = -2.0 * kPi * j / n;
    twiddle_[j] = {std::cos(a), std::sin(a)};
  }
}

void Plan::run(std::complex<double>* x) const {
  std::vector<std::complex<double>> scratch(n_);
  fft_rec(x, n_, 1, twiddle_.data(), n_, scratch.data());
}

void Plan::forward(std::complex<double>* x) const { run(x); }

void Plan::inverse(std::complex<double>* x) const {
  for (int i = 0; i < n_; ++i) x[i] = std::conj(x[i]);
  run(x);
  const double s = 1.0 / n_;
  for (int i = 0; i < n_; ++i) x[i] = std::conj(x[i]) * s;
}

int next_fast_size(int n) {
  if (n <= 1) return 1;
  for (int m = n;; ++m) {
    int r = m;
    for (int f : {2, 3, 5}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

}  // namespace fft

}  // namespace mtms
