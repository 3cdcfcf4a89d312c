// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/targets.hpp"

#include <algorithm>
#include <cmath>

namespace mtms {

namespace {

void require_pair(const ComplexSpectrogram& clean, const ComplexSpectrogram& noise,
                  const char* where) {
  if (clean.frames != noise.frames || clean.bins != noise.bins) {
    throw DimensionError(std::string(where) + ": clean/noise shape mismatch (" +
                         std::to_string(clean.frames) + "x" + std::to_string(clean.bins) +
                         " vs " + std::to_string(noise.frames) + "x" +
                         std::to_string(noise.bins) + ")");
  }
}

double xi_db(double px, double pn) {
  const double xi = px / (pn + kEpsFloor);
  return 10.0 * std::log10(std::max(xi, kEpsFloor));
}

}  // namespace

Matrix compute_irm(const ComplexSpectrogram& clean, const ComplexSpectrogram& noise) {
  require_pair(clean, noise, "compute_irm");
  Matrix out(clean.frames, clean.bins);
  for (int t = 0; t < clean.frames; ++t) {
    for (int k = 0; k < clean.bins; ++k) {
      const double px = std::norm(clean.at(t, k));
      const double pn = std::norm(noise.at(t, k));
      out.at(t, k) = std::sqrt(px / (px + pn + kEpsFloor));
    }
  }
  return out;
}

Matrix instantaneous_prior_snr(const ComplexSpectrogram& clean,
                               const ComplexSpectrogram& noise) {
  require_pair(clean, noise, "instantaneous_prior_snr");
  Matrix out(clean.frames, clean.bins);
  for (int t = 0; t < clean.frames; ++t) {
    for (int k = 0; k < clean.bins; ++k) {
      out.at(t, k) = std::norm(clean.at(t, k)) / (std::norm(noise.at(t, k)) + kEpsFloor);
    }
  }
  return out;
}

SnrStatsAccumulator::SnrStatsAccumulator(int bins)
    : bins_(bins), mean_(bins, 0.0), m2_(bins, 0.0) {}

void SnrStatsAccumulator::add_pair(const ComplexSpectrogram& clean,
                                   const ComplexSpectrogram& noise) {
  require_pair(clean, noise, "SnrStatsAccumulator::add_pair");
  if (clean.bins != bins_) {
    throw DimensionError("SnrStatsAccumulator: expected " + std::to_string(bins_) +
                         " bins, got " + std::to_string(clean.bins));
  }
  for (int t = 0; t < clean.frames; ++t) {
    ++n_;
    for (int k = 0; k < bins_; ++k) {
      const double x = xi_db(std::norm(clean.at(t, k)), std::norm(noise.at(t, k)));
      const double d = x - mean_[k];
      mean_[k] += d / static_cast<double>(n_);
      m2_[k] += d * (x - mean_[k]);
    }
  }
}

void SnrStatsAccumulator::add_xi(const Matrix& xi) {
  if (xi.cols != bins_) {
    throw DimensionError("SnrStatsAccumulator: expected " + std::to_string(bins_) +
                         " bins, got " + std::to_string(xi.cols));
  }
  for (int t = 0; t < xi.rows; ++t) {
    ++n_;
    for (int k = 0; k < bins_; ++k) {
      const double x = 10.0 * std::log10(std::max(xi.at(t, k), kEpsFloor));
      const double d = x - mean_[k];
      mean_[k] += d / static_cast<double>(n_);
      m2_[k] += d * (x - mean_[k]);
    }
  }
}

SnrStats SnrStatsAccumulator::finalize() const {
  if (n_ < 2) {
    throw DataError("fit_compression_stats: need at least 2 frames, got " +
                    std::to_string(n_));
  }
  SnrStats s;
  s.mu = mean_;
  s.sigma.resize(bins_);
  for (int k = 0; k < bins_; ++k) {
    const double var = m2_[k] / static_cast<double>(n_ - 1);
    s.sigma[k] = std::max(std::sqrt(std::max(var, 0.0)), kSigmaMinDb);
  }
  s.n_frames = n_;
  return s;
}

SnrStats fit_compression_stats(const std::vector<const ComplexSpectrogram*>& cleans,
                               const std::vector<const ComplexSpectrogram*>& noises) {
  if (cleans.empty() || cleans.size() != noises.size()) {
    throw DataError("fit_compression_stats: empty or mismatched corpus");
  }
  SnrStatsAccumulator acc(cleans[0]->bins);
  for (size_t i = 0; i < cleans.size(); ++i) acc.add_pair(*cleans[i], *noises[i]);
  return acc.finalize();
}

Matrix compress_snr(const Matrix& xi, const SnrStats& stats) {
  if (xi.cols != stats.bins()) {
    throw DimensionError("compress_snr: xi has " + std::to_string(xi.cols) +
                         " bins, stats have " + std::to_string(stats.bins()));
  }
  Matrix out(xi.rows, xi.cols);
  for (int t = 0; t < xi.rows; ++t) {
    for (int k = 0; k < xi.cols; ++k) {
      const double db = 10.0 * std::log10(std::max(xi.at(t, k), kEpsFloor));
      out.at(t, k) = normal_cdf((db - stats.mu[k]) / stats.sigma[k]);
    }
  }
  return out;
}

Matrix decompress_snr(const Matrix& xibar, const SnrStats& stats) {
  if (xibar.cols != stats.bins()) {
    throw DimensionError("decompress_snr: input has " + std::to_string(xibar.cols) +
                         " bins, stats have " + std::to_string(stats.bins()));
  }
  Matrix out(xibar.rows, xibar.cols);
  for (int t = 0; t < xibar.rows; ++t) {
    for (int k = 0; k < xibar.cols; ++k) {
      const double db = stats.mu[k] + stats.sigma[k] * normal_icdf(xibar.at(t, k));
      out.at(t, k) = std::pow(10.0, db / 10.0);
    }
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Acklam's rational approximation, accurate to ~1e-9 before refinement.
double icdf_seed(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_icdf(double p) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  double z = icdf_seed(p);
  // Two Halley refinements against erfc-based Phi.
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(z) - p;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
    const double u = e / pdf;
    z -= u / (1.0 + 0.5 * z * u);
  }
  return z;
}

}  // namespace mtms
