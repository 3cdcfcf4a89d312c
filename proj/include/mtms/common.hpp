// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtms {

// Error taxonomy. Everything surfaced by the library derives from Error so the
// CLI can map failures to exit codes uniformly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};
class LengthError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};
class DomainError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class StateError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

// Shared numeric floors.
inline constexpr double kEpsFloor = 1e-12;   // power floor inside logs and ratios
inline constexpr double kXiFloor = 1e-7;     // prior-SNR floor for gain evaluation
inline constexpr double kProbClamp = 1e-7;   // clamp on probabilities fed to log/probit
inline constexpr double kSigmaMinDb = 1e-3;  // floor on fitted per-bin std in dB

// Dense row-major real matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const std::string& where) {
  if (!a.same_shape(b)) {
    throw DimensionError(where + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols) + ")");
  }
}

}  // namespace mtms
