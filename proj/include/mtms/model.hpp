// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mtms/config.hpp"
#include "mtms/graph.hpp"

namespace mtms {

// Architecture knobs. Defaults mirror the published configuration (161 bins,
// 320-sample frames); reduced presets shrink the internal widths only.
struct ModelSpec {
  int bins = 161;
  int frame_len = 320;
  int time_conv_channels = 320;   // first time-domain conv output
  int time_feat_channels = 161;   // time-feature width after the 4th conv
  int fusion_channels = 644;      // fusion conv output
  int irm_width = 161;            // gate branch width; RI branch is 2x this
  int groups = 4;                 // sub-convolution groups, stage one
  int s2_groups = 4;              // sub-convolution groups, stage two
  int units = 3;                  // multi-scale units per branch
  std::vector<int> unit_dilations = {1, 3, 5};
  int s2_blocks = 8;
  std::vector<int> s2_dilation_cycle = {1, 2, 4, 8, 16};
  int s2_wide = 322;
  int s2_narrow = 161;
  double dropout = 0.2;

  int ri_width() const { return 2 * irm_width; }
  int feat_channels() const { return 3 * bins; }  // LPS + stacked RI

  static ModelSpec from_config(const Config& cfg);
  void validate() const;
};

// Contiguous sub-convolution group sizes. Remainder channels go to the
// outermost groups first (161/4 -> 41,40,40,40; 322/4 -> 81,80,80,81).
std::vector<int> split_group_sizes(int channels, int groups);

struct ConvDesc {
  enum class Act { kNone, kRelu, kSigmoid };
  std::string name;
  int in_c = 0;
  int out_c = 0;
  int kernel = 1;
  int dilation = 1;
  bool bias = true;
  bool bn = false;
  Act act = Act::kNone;
};

struct BnDesc {
  std::string name;
  int channels = 0;
  bool relu_after = false;  // norms inside multi-scale layers feed a ReLU
};

// Every convolution and norm of both stages in construction order; the single
// source of truth shared by parameter creation, graph building and FLOPs
// accounting.
struct ArchPlan {
  std::vector<ConvDesc> convs;
  std::vector<BnDesc> bns;
};
ArchPlan build_arch_plan(const ModelSpec& spec);

class ModelParams {
 public:
  Param* create(const std::string& name, std::vector<int64_t> dims, bool trainable);
  Param* find(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::unique_ptr<Param>>& all() const { return order_; }
  std::vector<Param*> trainable_params() const;
  int64_t count_scalars() const;            // includes running-stat buffers
  int64_t count_trainable_scalars() const;  // model size in the usual sense
  void zero_grad();

  uint32_t version = 1;
  uint64_t init_seed = 0;

 private:
  std::vector<std::unique_ptr<Param>> order_;
  std::map<std::string, Param*> by_name_;
};

struct StageOneNodes {
  Node* irm_hat = nullptr;
  Node* ri_hat = nullptr;
};

struct JointNodes {
  Node* irm_hat = nullptr;
  Node* ri_hat = nullptr;
  Node* xibar_hat = nullptr;
  Node* avg_mag = nullptr;
  Node* noisy_mag = nullptr;
};

struct StageOneEval {
  Matrix irm_hat;  // T x bins
  Matrix ri_hat;   // T x 2*bins
};

struct FullEval {
  Matrix irm_hat;
  Matrix ri_hat;
  Matrix xibar_hat;
};

class Model {
 public:
  explicit Model(ModelSpec spec);

  void init(uint64_t seed);  // create + initialize all parameters

  const ModelSpec& spec() const { return spec_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Graph builders; inputs are (1, C, T) nodes.
  StageOneNodes build_stage1(Graph& g, Node* frames, Node* lps, Node* ri);
  Node* build_stage2(Graph& g, Node* avg_mag, Node* noisy_mag);
  // Stage one plus the in-graph magnitude coupling feeding stage two, so
  // stage-two gradients reach stage one.
  JointNodes build_joint(Graph& g, const Matrix& frames, const Matrix& lps,
                         const Matrix& ri);

  // Inference-mode forwards on T x C matrices.
  StageOneEval eval_stage1(const Matrix& frames, const Matrix& lps, const Matrix& ri);
  Matrix eval_stage2(const Matrix& avg_mag, const Matrix& noisy_mag);
  FullEval eval_full(const Matrix& frames, const Matrix& lps, const Matrix& ri);

  int64_t count_params() const { return params_.count_trainable_scalars(); }
  int64_t count_flops_per_frame() const;

 private:
  Node* conv_layer(Graph& g, Node* x, const std::string& name);
  Node* ms_layer(Graph& g, Node* x, const std::string& prefix, int groups);
  BatchNormState bn_state(const std::string& name) const;
  const ConvDesc& desc(const std::string& name) const;

  ModelSpec spec_;
  ArchPlan plan_;
  std::map<std::string, const ConvDesc*> conv_by_name_;
  std::map<std::string, const BnDesc*> bn_by_name_;
  ModelParams params_;
  bool initialized_ = false;
};

// Layout conversions between T x C matrices and (1, C, T) tensors.
Tensor3 matrix_to_tensor(const Matrix& m);
Matrix tensor_to_matrix(const Tensor3& t);

// sqrt(exp(lps)) as used by the magnitude coupling and the estimators.
Matrix magnitude_from_lps(const Matrix& lps);

}  // namespace mtms
