// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <memory>
#include <random>
#include <vector>

#include "mtms/tensor.hpp"

namespace mtms {

// Deterministic RNG with a stable uniform mapping (does not depend on
// std::uniform_real_distribution implementation details).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  uint64_t next() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 gen_;
};

struct Conv1dSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_time = 1;
  int dilation = 1;
  int groups = 1;
  bool causal = true;
  bool bias = true;

  void validate() const;
  int64_t weight_count() const {
    return static_cast<int64_t>(out_channels) * (in_channels / groups) * kernel_time;
  }
};

// Persistent batch-norm state: learnable scale/shift plus running statistics.
struct BatchNormState {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  Param* running_mean = nullptr;  // buffer
  Param* running_var = nullptr;   // buffer
  double momentum = 0.9;
  double eps = 1e-5;
  int channels = 0;
};

class Graph;

class Node {
 public:
  virtual ~Node() = default;
  Tensor3 out;
  Tensor3 grad;  // dLoss/dout, allocated during backward

 protected:
  friend class Graph;
  virtual void forward(bool training, Rng& rng) = 0;
  virtual void backward() = 0;
  std::vector<Node*> parents;
};

// Reverse-mode tape. Nodes run forward in creation order and backward in
// reverse. One graph instance is single-threaded; parameters may be shared
// across graphs as long as passes do not overlap.
class Graph {
 public:
  explicit Graph(uint64_t dropout_seed = 0);

  Node* input(Tensor3 value);
  Node* conv1d(Node* x, const Conv1dSpec& spec, Param* weight, Param* bias);
  Node* batchnorm(Node* x, const BatchNormState& state);
  Node* relu(Node* x);
  Node* sigmoid(Node* x);
  Node* dropout(Node* x, double rate);
  Node* add(Node* a, Node* b);
  Node* mul(Node* a, Node* b);
  Node* scale(Node* x, double factor);
  Node* concat_channels(const std::vector<Node*>& xs);
  Node* slice_channels(Node* x, int start, int count);
  // (B, 2K, T) -> (B, K, T): per-bin magnitude of stacked real/imag halves.
  Node* ri_magnitude(Node* x);
  Node* mse_loss(Node* pred, Node* target);
  Node* bce2_loss(Node* pred, Node* target);  // base-2 cross-entropy
  Node* weighted_sum(Node* a, double wa, Node* b, double wb);  // scalars

  void forward(bool training);
  // Seeds d(loss)/d(loss)=1 and accumulates into Param::grad. Throws
  // StateError when called twice without an intervening forward.
  void backward(Node* loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  template <typename T, typename... Args>
  T* emplace(Args&&... args);

  std::vector<std::unique_ptr<Node>> nodes_;
  Rng rng_;
  bool forward_done_ = false;
  bool backward_done_ = false;
};

}  // namespace mtms
