// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "mtms/common.hpp"

namespace mtms {

// Exponential integral E1(x) = int_x^inf exp(-t)/t dt, |error| < 1e-10 on
// [1e-6, 50]. Series for x < 1, continued fraction otherwise.
double expint_e1(double x);

// Log-spectral-amplitude gain: v = xi/(1+xi)*gamma, G = xi/(1+xi)*exp(E1(v)/2),
// clamped to (0, 1]. xi is floored at kXiFloor.
double mmse_lsa_gain(double xi, double gamma);

// Per-bin enhanced magnitude sqrt(exp(lps)) * G with gamma = 1 + xi.
Matrix enhance_magnitude_mmse(const Matrix& noisy_lps, const Matrix& xi);

}  // namespace mtms
