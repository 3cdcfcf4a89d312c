// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtms/common.hpp"

namespace mtms {

struct Shape3 {
  int batch = 0;
  int channels = 0;
  int time = 0;

  bool operator==(const Shape3&) const = default;
  int64_t numel() const {
    return static_cast<int64_t>(batch) * channels * time;
  }
  std::string str() const {
    return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," +
           std::to_string(time) + ")";
  }
};

// Dense (batch, channels, time) tensor, time fastest.
struct Tensor3 {
  Shape3 shape;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int b, int c, int t, double fill = 0.0)
      : shape{b, c, t}, v(static_cast<size_t>(b) * c * t, fill) {}

  double& at(int b, int c, int t) {
    return v[(static_cast<size_t>(b) * shape.channels + c) * shape.time + t];
  }
  double at(int b, int c, int t) const {
    return v[(static_cast<size_t>(b) * shape.channels + c) * shape.time + t];
  }
  double* row(int b, int c) {
    return v.data() + (static_cast<size_t>(b) * shape.channels + c) * shape.time;
  }
  const double* row(int b, int c) const {
    return v.data() + (static_cast<size_t>(b) * shape.channels + c) * shape.time;
  }
};

// Named parameter or persistent buffer. Buffers (trainable == false) are
// serialized with checkpoints but skipped by the optimizer.
struct Param {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
};

}  // namespace mtms
