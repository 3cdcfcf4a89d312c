// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/mmse_lsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtms {

namespace {
constexpr double kEulerGamma = 0.57721566490153286061;
}

double expint_e1(double x) {
  if (!(x > 0.0)) {
    throw DomainError("expint_e1: x must be > 0, got " + std::to_string(x));
  }
  if (x < 1.0) {
    // E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k * k!)
    double sum = 0.0;
    double term = 1.0;  // x^k / k!
    for (int k = 1; k <= 40; ++k) {
      term *= x / k;
      const double contrib = (k % 2 == 1 ? term : -term) / k;
      sum += contrib;
      if (std::abs(contrib) < 1e-17 * std::max(std::abs(sum), 1.0)) break;
    }
    return -kEulerGamma - std::log(x) + sum;
  }
  // Modified Lentz continued fraction for E1.
  const double tiny = std::numeric_limits<double>::min() * 1e4;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 200; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x);
}

double mmse_lsa_gain(double xi, double gamma) {
  xi = std::max(xi, kXiFloor);
  const double w = xi / (1.0 + xi);
  const double v = std::max(w * gamma, 1e-12);
  const double g = w * std::exp(0.5 * expint_e1(v));
  return std::min(g, 1.0);
}

Matrix enhance_magnitude_mmse(const Matrix& noisy_lps, const Matrix& xi) {
  require_same_shape(noisy_lps, xi, "enhance_magnitude_mmse");
  Matrix out(noisy_lps.rows, noisy_lps.cols);
  for (int t = 0; t < out.rows; ++t) {
    for (int k = 0; k < out.cols; ++k) {
      const double mag = std::sqrt(std::exp(noisy_lps.at(t, k)));
      const double xf = std::max(xi.at(t, k), kXiFloor);
      out.at(t, k) = mag * mmse_lsa_gain(xf, 1.0 + xf);
    }
  }
  return out;
}

}  // namespace mtms
