// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/model.hpp"

#include <algorithm>
#include <cmath>

namespace mtms {

ModelSpec ModelSpec::from_config(const Config& cfg) {
  ModelSpec s;
  s.bins = cfg.get_int("model.bins");
  s.frame_len = cfg.get_int("model.frame_len");
  s.time_conv_channels = cfg.get_int("model.time_conv");
  s.time_feat_channels = cfg.get_int("model.time_feat");
  s.fusion_channels = cfg.get_int("model.fusion");
  s.irm_width = cfg.get_int("model.irm_width");
  s.groups = cfg.get_int("model.groups");
  s.s2_groups = cfg.get_int("model.s2_groups");
  s.units = cfg.get_int("model.units");
  s.unit_dilations = cfg.get_int_list("model.dilations");
  s.s2_blocks = cfg.get_int("model.s2_blocks");
  s.s2_dilation_cycle = cfg.get_int_list("model.s2_cycle");
  s.s2_wide = cfg.get_int("model.s2_wide");
  s.s2_narrow = cfg.get_int("model.s2_narrow");
  s.dropout = cfg.get_double("model.dropout");
  s.validate();
  return s;
}

void ModelSpec::validate() const {
  if (bins <= 0 || frame_len <= 0) throw ConfigError("ModelSpec: bad bins/frame_len");
  if (time_conv_channels <= 0 || time_feat_channels <= 0 || fusion_channels <= 0 ||
      irm_width <= 0 || s2_wide <= 0 || s2_narrow <= 0) {
    throw ConfigError("ModelSpec: widths must be positive");
  }
  if (units <= 0 || static_cast<int>(unit_dilations.size()) < units) {
    throw ConfigError("ModelSpec: need a dilation per multi-scale unit");
  }
  if (s2_blocks <= 0 || s2_dilation_cycle.empty()) {
    throw ConfigError("ModelSpec: bad stage-two block setup");
  }
  if (groups <= 0 || groups > irm_width || s2_groups <= 0 || s2_groups > s2_wide) {
    throw ConfigError("ModelSpec: bad group counts");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("ModelSpec: bad dropout");
}

std::vector<int> split_group_sizes(int channels, int groups) {
  if (groups <= 0 || channels < groups) {
    throw ConfigError("split_group_sizes: need 0 < groups <= channels");
  }
  std::vector<int> sizes(groups, channels / groups);
  int rem = channels % groups;
  // Alternate front/back so the extras sit on the outermost groups.
  int lo = 0, hi = groups - 1;
  bool front = true;
  while (rem > 0) {
    if (front) {
      ++sizes[lo++];
    } else {
      ++sizes[hi--];
    }
    front = !front;
    --rem;
  }
  return sizes;
}

namespace {

void add_conv(ArchPlan& p, const std::string& name, int in_c, int out_c, int k, int d,
              bool bn, ConvDesc::Act act) {
  ConvDesc c;
  c.name = name;
  c.in_c = in_c;
  c.out_c = out_c;
  c.kernel = k;
  c.dilation = d;
  c.bn = bn;
  c.act = act;
  p.convs.push_back(c);
  if (bn) p.bns.push_back({name + ".bn", out_c, false});
}

void add_ms_group(ArchPlan& p, const std::string& prefix, int channels, int groups,
                  int dilation) {
  const std::vector<int> sizes = split_group_sizes(channels, groups);
  for (size_t gi = 0; gi < sizes.size(); ++gi) {
    add_conv(p, prefix + ".g" + std::to_string(gi), sizes[gi], sizes[gi], 3, dilation,
             /*bn=*/false, ConvDesc::Act::kNone);
  }
  p.bns.push_back({prefix + ".bn", channels, true});
}

}  // namespace

ArchPlan build_arch_plan(const ModelSpec& s) {
  ArchPlan p;
  const int feat = s.feat_channels();
  const int ri_w = s.ri_width();

  // Stage one: time-feature extractor and fusion.
  add_conv(p, "s1.conv1", s.frame_len, s.time_conv_channels, 3, 1, true,
           ConvDesc::Act::kRelu);
  add_conv(p, "s1.conv2", s.time_conv_channels, s.time_feat_channels, 3, 3, true,
           ConvDesc::Act::kRelu);
  add_conv(p, "s1.conv3", s.time_feat_channels, s.time_feat_channels, 3, 5, true,
           ConvDesc::Act::kRelu);
  add_conv(p, "s1.conv4", s.time_feat_channels, s.time_feat_channels, 1, 1, true,
           ConvDesc::Act::kRelu);
  add_conv(p, "s1.fuse", s.time_feat_channels + feat, s.fusion_channels, 1, 1, true,
           ConvDesc::Act::kRelu);

  // Branch entries: the fused stream projects to the RI width, and the gate
  // branch is spawned from those features.
  add_conv(p, "s1.entry_ri", s.fusion_channels, ri_w, 1, 1, false, ConvDesc::Act::kNone);
  add_conv(p, "s1.entry_irm", ri_w, s.irm_width, 1, 1, false, ConvDesc::Act::kSigmoid);

  for (int u = 0; u < s.units; ++u) {
    const std::string up = "s1.u" + std::to_string(u);
    const int d = s.unit_dilations[u];
    add_conv(p, up + ".irm.proj", s.irm_width + feat, s.irm_width, 1, 1, false,
             ConvDesc::Act::kNone);
    add_ms_group(p, up + ".irm", s.irm_width, s.groups, d);
    add_conv(p, up + ".ri.proj", ri_w + feat, ri_w, 1, 1, false, ConvDesc::Act::kNone);
    add_ms_group(p, up + ".ri", ri_w, s.groups, d);
    add_conv(p, up + ".gate", s.irm_width, s.irm_width, 1, 1, false,
             ConvDesc::Act::kSigmoid);
  }
  add_conv(p, "s1.head_irm", s.irm_width, s.bins, 1, 1, false, ConvDesc::Act::kSigmoid);
  add_conv(p, "s1.head_ri", ri_w, 2 * s.bins, 1, 1, false, ConvDesc::Act::kNone);

  // Stage two: residual blocks over the concatenated magnitudes.
  const int s2_in = 2 * s.bins;
  for (int i = 0; i < s.s2_blocks; ++i) {
    const std::string bp = "s2.b" + std::to_string(i);
    const int d = s.s2_dilation_cycle[i % s.s2_dilation_cycle.size()];
    const int in_w = (i == 0) ? s2_in : s.s2_narrow;
    add_conv(p, bp + ".wide", in_w, s.s2_wide, 1, 1, false, ConvDesc::Act::kRelu);
    add_ms_group(p, bp, s.s2_wide, s.s2_groups, d);
    add_conv(p, bp + ".narrow", s.s2_wide, s.s2_narrow, 1, 1, false,
             ConvDesc::Act::kNone);
    if (i == 0) {
      add_conv(p, "s2.b0.resproj", s2_in, s.s2_narrow, 1, 1, false,
               ConvDesc::Act::kNone);
    }
  }
  add_conv(p, "s2.head", s.s2_narrow, s.bins, 1, 1, false, ConvDesc::Act::kSigmoid);
  return p;
}

Param* ModelParams::create(const std::string& name, std::vector<int64_t> dims,
                           bool trainable) {
  if (by_name_.count(name)) throw StateError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->dims = std::move(dims);
  p->value.assign(p->numel(), 0.0);
  p->grad.assign(p->numel(), 0.0);
  p->trainable = trainable;
  Param* raw = p.get();
  order_.push_back(std::move(p));
  by_name_[name] = raw;
  return raw;
}

Param* ModelParams::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

bool ModelParams::contains(const std::string& name) const {
  return by_name_.count(name) > 0;
}

std::vector<Param*> ModelParams::trainable_params() const {
  std::vector<Param*> out;
  for (const auto& p : order_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

int64_t ModelParams::count_scalars() const {
  int64_t n = 0;
  for (const auto& p : order_) n += p->numel();
  return n;
}

int64_t ModelParams::count_trainable_scalars() const {
  int64_t n = 0;
  for (const auto& p : order_) {
    if (p->trainable) n += p->numel();
  }
  return n;
}

void ModelParams::zero_grad() {
  for (const auto& p : order_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  plan_ = build_arch_plan(spec_);
  for (const auto& c : plan_.convs) conv_by_name_[c.name] = &c;
  for (const auto& b : plan_.bns) bn_by_name_[b.name] = &b;
}

void Model::init(uint64_t seed) {
  if (initialized_) throw StateError("Model::init called twice");
  Rng rng(seed);
  params_.init_seed = seed;
  for (const auto& c : plan_.convs) {
    Param* w = params_.create(c.name + ".w", {c.out_c, c.in_c, c.kernel}, true);
    const double bound = std::sqrt(1.0 / (static_cast<double>(c.in_c) * c.kernel));
    for (double& v : w->value) v = rng.uniform(-bound, bound);
    if (c.bias) params_.create(c.name + ".b", {c.out_c}, true);  // zero init
  }
  for (const auto& b : plan_.bns) {
    Param* gamma = params_.create(b.name + ".gamma", {b.channels}, true);
    std::fill(gamma->value.begin(), gamma->value.end(), 1.0);
    params_.create(b.name + ".beta", {b.channels}, true);
    params_.create(b.name + ".running_mean", {b.channels}, false);
    Param* rv = params_.create(b.name + ".running_var", {b.channels}, false);
    std::fill(rv->value.begin(), rv->value.end(), 1.0);
  }
  initialized_ = true;
}

const ConvDesc& Model::desc(const std::string& name) const {
  auto it = conv_by_name_.find(name);
  if (it == conv_by_name_.end()) throw StateError("unknown conv layer: " + name);
  return *it->second;
}

BatchNormState Model::bn_state(const std::string& name) const {
  auto it = bn_by_name_.find(name);
  if (it == bn_by_name_.end()) throw StateError("unknown norm layer: " + name);
  BatchNormState st;
  st.channels = it->second->channels;
  st.gamma = params_.find(name + ".gamma");
  st.beta = params_.find(name + ".beta");
  st.running_mean = params_.find(name + ".running_mean");
  st.running_var = params_.find(name + ".running_var");
  return st;
}

Node* Model::conv_layer(Graph& g, Node* x, const std::string& name) {
  const ConvDesc& c = desc(name);
  Conv1dSpec spec;
  spec.in_channels = c.in_c;
  spec.out_channels = c.out_c;
  spec.kernel_time = c.kernel;
  spec.dilation = c.dilation;
  Param* w = params_.find(name + ".w");
  Param* b = c.bias ? params_.find(name + ".b") : nullptr;
  Node* h = g.conv1d(x, spec, w, b);
  if (c.bn) h = g.batchnorm(h, bn_state(name + ".bn"));
  switch (c.act) {
    case ConvDesc::Act::kNone:
      break;
    case ConvDesc::Act::kRelu:
      h = g.relu(h);
      break;
    case ConvDesc::Act::kSigmoid:
      h = g.sigmoid(h);
      break;
  }
  return h;
}

Node* Model::ms_layer(Graph& g, Node* x, const std::string& prefix, int groups) {
  const std::vector<int> sizes = split_group_sizes(x->out.shape.channels, groups);
  std::vector<Node*> outs;
  int start = 0;
  for (size_t gi = 0; gi < sizes.size(); ++gi) {
    Node* part = g.slice_channels(x, start, sizes[gi]);
    outs.push_back(conv_layer(g, part, prefix + ".g" + std::to_string(gi)));
    start += sizes[gi];
  }
  Node* cat = g.concat_channels(outs);
  Node* h = g.relu(g.batchnorm(cat, bn_state(prefix + ".bn")));
  return g.dropout(h, spec_.dropout);
}

StageOneNodes Model::build_stage1(Graph& g, Node* frames, Node* lps, Node* ri) {
  if (!initialized_) throw StateError("model not initialized");
  Node* h = conv_layer(g, frames, "s1.conv1");
  h = conv_layer(g, h, "s1.conv2");
  h = conv_layer(g, h, "s1.conv3");
  h = conv_layer(g, h, "s1.conv4");
  Node* fused = conv_layer(g, g.concat_channels({h, lps, ri}), "s1.fuse");
  Node* ri_f = conv_layer(g, fused, "s1.entry_ri");
  Node* irm_f = conv_layer(g, ri_f, "s1.entry_irm");
  for (int u = 0; u < spec_.units; ++u) {
    const std::string up = "s1.u" + std::to_string(u);
    Node* irm_in = conv_layer(g, g.concat_channels({irm_f, lps, ri}), up + ".irm.proj");
    irm_f = g.add(irm_in, ms_layer(g, irm_in, up + ".irm", spec_.groups));
    Node* ri_in = conv_layer(g, g.concat_channels({ri_f, lps, ri}), up + ".ri.proj");
    ri_f = g.add(ri_in, ms_layer(g, ri_in, up + ".ri", spec_.groups));
    // The gate is duplicated across the two halves so one factor scales the
    // matching real and imaginary features.
    Node* gate = conv_layer(g, irm_f, up + ".gate");
    ri_f = g.mul(g.concat_channels({gate, gate}), ri_f);
  }
  StageOneNodes out;
  out.irm_hat = conv_layer(g, irm_f, "s1.head_irm");
  out.ri_hat = conv_layer(g, ri_f, "s1.head_ri");
  return out;
}

Node* Model::build_stage2(Graph& g, Node* avg_mag, Node* noisy_mag) {
  if (!initialized_) throw StateError("model not initialized");
  Node* x = g.concat_channels({avg_mag, noisy_mag});
  Node* h = x;
  for (int i = 0; i < spec_.s2_blocks; ++i) {
    const std::string bp = "s2.b" + std::to_string(i);
    Node* res = (i == 0) ? conv_layer(g, x, "s2.b0.resproj") : h;
    Node* w = conv_layer(g, h, bp + ".wide");
    w = ms_layer(g, w, bp, spec_.s2_groups);
    w = conv_layer(g, w, bp + ".narrow");
    h = g.add(w, res);
  }
  return conv_layer(g, h, "s2.head");
}

JointNodes Model::build_joint(Graph& g, const Matrix& frames, const Matrix& lps,
                              const Matrix& ri) {
  Node* frames_in = g.input(matrix_to_tensor(frames));
  Node* lps_in = g.input(matrix_to_tensor(lps));
  Node* ri_in = g.input(matrix_to_tensor(ri));
  JointNodes out;
  StageOneNodes s1 = build_stage1(g, frames_in, lps_in, ri_in);
  out.irm_hat = s1.irm_hat;
  out.ri_hat = s1.ri_hat;
  out.noisy_mag = g.input(matrix_to_tensor(magnitude_from_lps(lps)));
  Node* masked = g.mul(s1.irm_hat, out.noisy_mag);
  Node* ri_mag = g.ri_magnitude(s1.ri_hat);
  out.avg_mag = g.scale(g.add(ri_mag, masked), 0.5);
  out.xibar_hat = build_stage2(g, out.avg_mag, out.noisy_mag);
  return out;
}

StageOneEval Model::eval_stage1(const Matrix& frames, const Matrix& lps,
                                const Matrix& ri) {
  Graph g;
  Node* fr = g.input(matrix_to_tensor(frames));
  Node* lp = g.input(matrix_to_tensor(lps));
  Node* rin = g.input(matrix_to_tensor(ri));
  StageOneNodes nodes = build_stage1(g, fr, lp, rin);
  g.forward(false);
  return {tensor_to_matrix(nodes.irm_hat->out), tensor_to_matrix(nodes.ri_hat->out)};
}

Matrix Model::eval_stage2(const Matrix& avg_mag, const Matrix& noisy_mag) {
  Graph g;
  Node* a = g.input(matrix_to_tensor(avg_mag));
  Node* n = g.input(matrix_to_tensor(noisy_mag));
  Node* xibar = build_stage2(g, a, n);
  g.forward(false);
  return tensor_to_matrix(xibar->out);
}

FullEval Model::eval_full(const Matrix& frames, const Matrix& lps, const Matrix& ri) {
  Graph g;
  JointNodes nodes = build_joint(g, frames, lps, ri);
  g.forward(false);
  return {tensor_to_matrix(nodes.irm_hat->out), tensor_to_matrix(nodes.ri_hat->out),
          tensor_to_matrix(nodes.xibar_hat->out)};
}

int64_t Model::count_flops_per_frame() const {
  // 2 flops per multiply-accumulate, one add per bias element; pointwise
  // costs: batchnorm 2, relu 1, sigmoid 4, residual add / gate multiply 1.
  int64_t flops = 0;
  for (const auto& c : plan_.convs) {
    flops += 2ll * c.out_c * c.in_c * c.kernel;
    if (c.bias) flops += c.out_c;
    if (c.act == ConvDesc::Act::kRelu) flops += c.out_c;
    if (c.act == ConvDesc::Act::kSigmoid) flops += 4ll * c.out_c;
  }
  for (const auto& b : plan_.bns) {
    flops += 2ll * b.channels;  // folded scale + shift
    if (b.relu_after) flops += b.channels;
  }
  // Residual adds and gate multiplies.
  flops += static_cast<int64_t>(spec_.units) *
           (spec_.irm_width + spec_.ri_width() /*unit adds*/ + 2ll * spec_.ri_width());
  flops += static_cast<int64_t>(spec_.s2_blocks) * spec_.s2_narrow;
  return flops;
}

Tensor3 matrix_to_tensor(const Matrix& m) {
  Tensor3 t(1, m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) t.at(0, c, r) = m.at(r, c);
  }
  return t;
}

Matrix tensor_to_matrix(const Tensor3& t) {
  if (t.shape.batch != 1) throw DimensionError("tensor_to_matrix: batch must be 1");
  Matrix m(t.shape.time, t.shape.channels);
  for (int c = 0; c < t.shape.channels; ++c) {
    for (int r = 0; r < t.shape.time; ++r) m.at(r, c) = t.at(0, c, r);
  }
  return m;
}

Matrix magnitude_from_lps(const Matrix& lps) {
  Matrix out(lps.rows, lps.cols);
  for (size_t i = 0; i < lps.v.size(); ++i) out.v[i] = std::sqrt(std::exp(lps.v[i]));
  return out;
}

}  // namespace mtms
