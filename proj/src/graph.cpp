// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/graph.hpp"

#include <algorithm>
#include <cmath>

namespace mtms {

void Conv1dSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ConfigError("Conv1dSpec: channel counts must be positive");
  }
  if (groups <= 0 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("Conv1dSpec: in/out channels must be divisible by groups");
  }
  if (kernel_time < 1 || dilation < 1) {
    throw ConfigError("Conv1dSpec: kernel_time and dilation must be >= 1");
  }
  if (!causal) {
    throw ConfigError("Conv1dSpec: only causal convolutions are supported");
  }
}

namespace {

void require_shape(const Shape3& a, const Shape3& b, const char* where) {
  if (!(a == b)) {
    throw DimensionError(std::string(where) + ": shape mismatch " + a.str() + " vs " +
                         b.str());
  }
}

class InputNode final : public Node {
 public:
  explicit InputNode(Tensor3 value) { out = std::move(value); }

 protected:
  void forward(bool, Rng&) override {}
  void backward() override {}
};

class Conv1dNode final : public Node {
 public:
  Conv1dNode(Node* x, const Conv1dSpec& spec, Param* w, Param* b)
      : spec_(spec), w_(w), b_(b) {
    spec_.validate();
    if (x->out.shape.channels != spec_.in_channels) {
      throw DimensionError("conv1d: input has " + std::to_string(x->out.shape.channels) +
                           " channels, spec expects " + std::to_string(spec_.in_channels));
    }
    if (w_ == nullptr || static_cast<int64_t>(w_->value.size()) != spec_.weight_count()) {
      throw DimensionError("conv1d: weight size mismatch");
    }
    if (spec_.bias && (b_ == nullptr ||
                       static_cast<int>(b_->value.size()) != spec_.out_channels)) {
      throw DimensionError("conv1d: bias size mismatch");
    }
    parents = {x};
    out = Tensor3(x->out.shape.batch, spec_.out_channels, x->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const Tensor3& x = parents[0]->out;
    const int bsz = x.shape.batch, t_n = x.shape.time;
    const int icg = spec_.in_channels / spec_.groups;
    const int ocg = spec_.out_channels / spec_.groups;
    const int k = spec_.kernel_time, d = spec_.dilation;
    for (int b = 0; b < bsz; ++b) {
      for (int oc = 0; oc < spec_.out_channels; ++oc) {
        const int g = oc / ocg;
        double* o = out.row(b, oc);
        const double bias = spec_.bias ? b_->value[oc] : 0.0;
        for (int t = 0; t < t_n; ++t) o[t] = bias;
        for (int icl = 0; icl < icg; ++icl) {
          const double* xr = x.row(b, g * icg + icl);
          const double* wr = w_->value.data() + (static_cast<size_t>(oc) * icg + icl) * k;
          for (int j = 0; j < k; ++j) {
            const int shift = (j - (k - 1)) * d;  // <= 0: causal left context
            const double wv = wr[j];
            for (int t = -shift; t < t_n; ++t) o[t] += wv * xr[t + shift];
          }
        }
      }
    }
  }

  void backward() override {
    Tensor3& xg = parents[0]->grad;
    const Tensor3& x = parents[0]->out;
    const int bsz = x.shape.batch, t_n = x.shape.time;
    const int icg = spec_.in_channels / spec_.groups;
    const int ocg = spec_.out_channels / spec_.groups;
    const int k = spec_.kernel_time, d = spec_.dilation;
    for (int b = 0; b < bsz; ++b) {
      for (int oc = 0; oc < spec_.out_channels; ++oc) {
        const int g = oc / ocg;
        const double* go = grad.row(b, oc);
        if (spec_.bias) {
          double s = 0.0;
          for (int t = 0; t < t_n; ++t) s += go[t];
          b_->grad[oc] += s;
        }
        for (int icl = 0; icl < icg; ++icl) {
          const double* xr = x.row(b, g * icg + icl);
          double* xgr = xg.row(b, g * icg + icl);
          const size_t wbase = (static_cast<size_t>(oc) * icg + icl) * k;
          for (int j = 0; j < k; ++j) {
            const int shift = (j - (k - 1)) * d;
            const double wv = w_->value[wbase + j];
            double ws = 0.0;
            for (int t = -shift; t < t_n; ++t) {
              ws += go[t] * xr[t + shift];
              xgr[t + shift] += wv * go[t];
            }
            w_->grad[wbase + j] += ws;
          }
        }
      }
    }
  }

 private:
  Conv1dSpec spec_;
  Param* w_;
  Param* b_;
};

class BatchNormNode final : public Node {
 public:
  BatchNormNode(Node* x, const BatchNormState& st) : st_(st) {
    if (x->out.shape.channels != st_.channels) {
      throw DimensionError("batchnorm: input has " +
                           std::to_string(x->out.shape.channels) +
                           " channels, state expects " + std::to_string(st_.channels));
    }
    parents = {x};
    out = Tensor3(x->out.shape.batch, st_.channels, x->out.shape.time);
    mean_.resize(st_.channels);
    invstd_.resize(st_.channels);
  }

 protected:
  void forward(bool training, Rng&) override {
    const Tensor3& x = parents[0]->out;
    const int bsz = x.shape.batch, t_n = x.shape.time;
    const double n = static_cast<double>(bsz) * t_n;
    training_ = training;
    for (int c = 0; c < st_.channels; ++c) {
      double mean, invstd;
      if (training) {
        double s = 0.0;
        for (int b = 0; b < bsz; ++b) {
          const double* xr = x.row(b, c);
          for (int t = 0; t < t_n; ++t) s += xr[t];
        }
        mean = s / n;
        double sq = 0.0;
        for (int b = 0; b < bsz; ++b) {
          const double* xr = x.row(b, c);
          for (int t = 0; t < t_n; ++t) sq += (xr[t] - mean) * (xr[t] - mean);
        }
        const double var = sq / n;
        invstd = 1.0 / std::sqrt(var + st_.eps);
        st_.running_mean->value[c] =
            st_.momentum * st_.running_mean->value[c] + (1.0 - st_.momentum) * mean;
        st_.running_var->value[c] =
            st_.momentum * st_.running_var->value[c] + (1.0 - st_.momentum) * var;
      } else {
        mean = st_.running_mean->value[c];
        invstd = 1.0 / std::sqrt(st_.running_var->value[c] + st_.eps);
      }
      mean_[c] = mean;
      invstd_[c] = invstd;
      const double g = st_.gamma->value[c];
      const double beta = st_.beta->value[c];
      for (int b = 0; b < bsz; ++b) {
        const double* xr = x.row(b, c);
        double* o = out.row(b, c);
        for (int t = 0; t < t_n; ++t) o[t] = g * (xr[t] - mean) * invstd + beta;
      }
    }
  }

  void backward() override {
    const Tensor3& x = parents[0]->out;
    Tensor3& xg = parents[0]->grad;
    const int bsz = x.shape.batch, t_n = x.shape.time;
    const double n = static_cast<double>(bsz) * t_n;
    for (int c = 0; c < st_.channels; ++c) {
      const double mean = mean_[c], invstd = invstd_[c];
      const double g = st_.gamma->value[c];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < bsz; ++b) {
        const double* xr = x.row(b, c);
        const double* gr = grad.row(b, c);
        for (int t = 0; t < t_n; ++t) {
          sum_dy += gr[t];
          sum_dy_xhat += gr[t] * (xr[t] - mean) * invstd;
        }
      }
      st_.beta->grad[c] += sum_dy;
      st_.gamma->grad[c] += sum_dy_xhat;
      if (training_) {
        const double k1 = sum_dy / n, k2 = sum_dy_xhat / n;
        for (int b = 0; b < bsz; ++b) {
          const double* xr = x.row(b, c);
          const double* gr = grad.row(b, c);
          double* xgr = xg.row(b, c);
          for (int t = 0; t < t_n; ++t) {
            const double xhat = (xr[t] - mean) * invstd;
            xgr[t] += g * invstd * (gr[t] - k1 - xhat * k2);
          }
        }
      } else {
        for (int b = 0; b < bsz; ++b) {
          const double* gr = grad.row(b, c);
          double* xgr = xg.row(b, c);
          for (int t = 0; t < t_n; ++t) xgr[t] += g * invstd * gr[t];
        }
      }
    }
  }

 private:
  BatchNormState st_;
  std::vector<double> mean_, invstd_;
  bool training_ = false;
};

class ReluNode final : public Node {
 public:
  explicit ReluNode(Node* x) {
    parents = {x};
    out = Tensor3(x->out.shape.batch, x->out.shape.channels, x->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& xv = parents[0]->out.v;
    for (size_t i = 0; i < xv.size(); ++i) out.v[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  }
  void backward() override {
    const auto& xv = parents[0]->out.v;
    auto& xg = parents[0]->grad.v;
    for (size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0) xg[i] += grad.v[i];
    }
  }
};

class SigmoidNode final : public Node {
 public:
  explicit SigmoidNode(Node* x) {
    parents = {x};
    out = Tensor3(x->out.shape.batch, x->out.shape.channels, x->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& xv = parents[0]->out.v;
    for (size_t i = 0; i < xv.size(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  }
  void backward() override {
    auto& xg = parents[0]->grad.v;
    for (size_t i = 0; i < out.v.size(); ++i) {
      xg[i] += grad.v[i] * out.v[i] * (1.0 - out.v[i]);
    }
  }
};

class DropoutNode final : public Node {
 public:
  DropoutNode(Node* x, double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) {
      throw ConfigError("dropout: rate must be in [0,1)");
    }
    parents = {x};
    out = Tensor3(x->out.shape.batch, x->out.shape.channels, x->out.shape.time);
  }

 protected:
  void forward(bool training, Rng& rng) override {
    const auto& xv = parents[0]->out.v;
    applied_ = training && rate_ > 0.0;
    if (!applied_) {
      out.v = xv;
      return;
    }
    // Mask drawn once per node so repeated forwards (finite differences) see
    // the same realization.
    if (mask_.size() != xv.size()) {
      mask_.resize(xv.size());
      const double keep_scale = 1.0 / (1.0 - rate_);
      for (size_t i = 0; i < mask_.size(); ++i) {
        mask_[i] = rng.uniform() < rate_ ? 0.0 : keep_scale;
      }
    }
    for (size_t i = 0; i < xv.size(); ++i) out.v[i] = xv[i] * mask_[i];
  }
  void backward() override {
    auto& xg = parents[0]->grad.v;
    if (!applied_) {
      for (size_t i = 0; i < xg.size(); ++i) xg[i] += grad.v[i];
      return;
    }
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += grad.v[i] * mask_[i];
  }

 private:
  double rate_;
  bool applied_ = false;
  std::vector<double> mask_;
};

class AddNode final : public Node {
 public:
  AddNode(Node* a, Node* b) {
    require_shape(a->out.shape, b->out.shape, "add");
    parents = {a, b};
    out = Tensor3(a->out.shape.batch, a->out.shape.channels, a->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& av = parents[0]->out.v;
    const auto& bv = parents[1]->out.v;
    for (size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] + bv[i];
  }
  void backward() override {
    for (Node* p : parents) {
      auto& pg = p->grad.v;
      for (size_t i = 0; i < pg.size(); ++i) pg[i] += grad.v[i];
    }
  }
};

class MulNode final : public Node {
 public:
  MulNode(Node* a, Node* b) {
    require_shape(a->out.shape, b->out.shape, "mul");
    parents = {a, b};
    out = Tensor3(a->out.shape.batch, a->out.shape.channels, a->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& av = parents[0]->out.v;
    const auto& bv = parents[1]->out.v;
    for (size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] * bv[i];
  }
  void backward() override {
    const auto& av = parents[0]->out.v;
    const auto& bv = parents[1]->out.v;
    auto& ag = parents[0]->grad.v;
    auto& bg = parents[1]->grad.v;
    for (size_t i = 0; i < av.size(); ++i) {
      ag[i] += grad.v[i] * bv[i];
      bg[i] += grad.v[i] * av[i];
    }
  }
};

class ScaleNode final : public Node {
 public:
  ScaleNode(Node* x, double f) : f_(f) {
    parents = {x};
    out = Tensor3(x->out.shape.batch, x->out.shape.channels, x->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& xv = parents[0]->out.v;
    for (size_t i = 0; i < xv.size(); ++i) out.v[i] = f_ * xv[i];
  }
  void backward() override {
    auto& xg = parents[0]->grad.v;
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += f_ * grad.v[i];
  }

 private:
  double f_;
};

class ConcatNode final : public Node {
 public:
  explicit ConcatNode(const std::vector<Node*>& xs) {
    if (xs.empty()) throw DimensionError("concat: no inputs");
    int channels = 0;
    for (Node* x : xs) {
      if (x->out.shape.batch != xs[0]->out.shape.batch ||
          x->out.shape.time != xs[0]->out.shape.time) {
        throw DimensionError("concat: batch/time mismatch");
      }
      channels += x->out.shape.channels;
    }
    parents = xs;
    out = Tensor3(xs[0]->out.shape.batch, channels, xs[0]->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const int bsz = out.shape.batch, t_n = out.shape.time;
    for (int b = 0; b < bsz; ++b) {
      int co = 0;
      for (Node* p : parents) {
        for (int c = 0; c < p->out.shape.channels; ++c, ++co) {
          const double* src = p->out.row(b, c);
          double* dst = out.row(b, co);
          for (int t = 0; t < t_n; ++t) dst[t] = src[t];
        }
      }
    }
  }
  void backward() override {
    const int bsz = out.shape.batch, t_n = out.shape.time;
    for (int b = 0; b < bsz; ++b) {
      int co = 0;
      for (Node* p : parents) {
        for (int c = 0; c < p->out.shape.channels; ++c, ++co) {
          double* dst = p->grad.row(b, c);
          const double* src = grad.row(b, co);
          for (int t = 0; t < t_n; ++t) dst[t] += src[t];
        }
      }
    }
  }
};

class SliceNode final : public Node {
 public:
  SliceNode(Node* x, int start, int count) : start_(start), count_(count) {
    if (start < 0 || count <= 0 || start + count > x->out.shape.channels) {
      throw DimensionError("slice: channel range out of bounds");
    }
    parents = {x};
    out = Tensor3(x->out.shape.batch, count, x->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const Tensor3& x = parents[0]->out;
    for (int b = 0; b < out.shape.batch; ++b) {
      for (int c = 0; c < count_; ++c) {
        const double* src = x.row(b, start_ + c);
        double* dst = out.row(b, c);
        for (int t = 0; t < out.shape.time; ++t) dst[t] = src[t];
      }
    }
  }
  void backward() override {
    Tensor3& xg = parents[0]->grad;
    for (int b = 0; b < out.shape.batch; ++b) {
      for (int c = 0; c < count_; ++c) {
        double* dst = xg.row(b, start_ + c);
        const double* src = grad.row(b, c);
        for (int t = 0; t < out.shape.time; ++t) dst[t] += src[t];
      }
    }
  }

 private:
  int start_, count_;
};

class RiMagnitudeNode final : public Node {
 public:
  explicit RiMagnitudeNode(Node* x) {
    if (x->out.shape.channels % 2 != 0) {
      throw DimensionError("ri_magnitude: channel count must be even");
    }
    parents = {x};
    out = Tensor3(x->out.shape.batch, x->out.shape.channels / 2, x->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const Tensor3& x = parents[0]->out;
    const int k_n = out.shape.channels;
    for (int b = 0; b < out.shape.batch; ++b) {
      for (int k = 0; k < k_n; ++k) {
        const double* re = x.row(b, k);
        const double* im = x.row(b, k_n + k);
        double* o = out.row(b, k);
        for (int t = 0; t < out.shape.time; ++t) {
          o[t] = std::sqrt(re[t] * re[t] + im[t] * im[t]);
        }
      }
    }
  }
  void backward() override {
    const Tensor3& x = parents[0]->out;
    Tensor3& xg = parents[0]->grad;
    const int k_n = out.shape.channels;
    for (int b = 0; b < out.shape.batch; ++b) {
      for (int k = 0; k < k_n; ++k) {
        const double* re = x.row(b, k);
        const double* im = x.row(b, k_n + k);
        double* gre = xg.row(b, k);
        double* gim = xg.row(b, k_n + k);
        const double* o = out.row(b, k);
        const double* g = grad.row(b, k);
        for (int t = 0; t < out.shape.time; ++t) {
          const double denom = std::max(o[t], 1e-9);
          gre[t] += g[t] * re[t] / denom;
          gim[t] += g[t] * im[t] / denom;
        }
      }
    }
  }
};

class MseNode final : public Node {
 public:
  MseNode(Node* pred, Node* target) {
    require_shape(pred->out.shape, target->out.shape, "mse_loss");
    parents = {pred, target};
    out = Tensor3(1, 1, 1);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& p = parents[0]->out.v;
    const auto& t = parents[1]->out.v;
    double s = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - t[i];
      s += d * d;
    }
    out.v[0] = s / static_cast<double>(p.size());
  }
  void backward() override {
    const auto& p = parents[0]->out.v;
    const auto& t = parents[1]->out.v;
    auto& pg = parents[0]->grad.v;
    auto& tg = parents[1]->grad.v;
    const double s = grad.v[0] * 2.0 / static_cast<double>(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
      const double d = s * (p[i] - t[i]);
      pg[i] += d;
      tg[i] -= d;
    }
  }
};

class Bce2Node final : public Node {
 public:
  Bce2Node(Node* pred, Node* target) {
    require_shape(pred->out.shape, target->out.shape, "bce2_loss");
    parents = {pred, target};
    out = Tensor3(1, 1, 1);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& p = parents[0]->out.v;
    const auto& t = parents[1]->out.v;
    double s = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
      s -= t[i] * std::log2(pc) + (1.0 - t[i]) * std::log2(1.0 - pc);
    }
    out.v[0] = s / static_cast<double>(p.size());
  }
  void backward() override {
    static const double inv_ln2 = 1.0 / std::log(2.0);
    const auto& p = parents[0]->out.v;
    const auto& t = parents[1]->out.v;
    auto& pg = parents[0]->grad.v;
    const double s = grad.v[0] * inv_ln2 / static_cast<double>(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] <= kProbClamp || p[i] >= 1.0 - kProbClamp) continue;  // clamped: flat
      pg[i] += s * (-t[i] / p[i] + (1.0 - t[i]) / (1.0 - p[i]));
    }
  }
};

class WeightedSumNode final : public Node {
 public:
  WeightedSumNode(Node* a, double wa, Node* b, double wb) : wa_(wa), wb_(wb) {
    require_shape(a->out.shape, b->out.shape, "weighted_sum");
    parents = {a, b};
    out = Tensor3(a->out.shape.batch, a->out.shape.channels, a->out.shape.time);
  }

 protected:
  void forward(bool, Rng&) override {
    const auto& a = parents[0]->out.v;
    const auto& b = parents[1]->out.v;
    for (size_t i = 0; i < a.size(); ++i) out.v[i] = wa_ * a[i] + wb_ * b[i];
  }
  void backward() override {
    auto& ag = parents[0]->grad.v;
    auto& bg = parents[1]->grad.v;
    for (size_t i = 0; i < ag.size(); ++i) {
      ag[i] += wa_ * grad.v[i];
      bg[i] += wb_ * grad.v[i];
    }
  }

 private:
  double wa_, wb_;
};

}  // namespace

Graph::Graph(uint64_t dropout_seed) : rng_(dropout_seed) {}

template <typename T, typename... Args>
T* Graph::emplace(Args&&... args) {
  auto node = std::make_unique<T>(std::forward<Args>(args)...);
  T* raw = node.get();
  nodes_.push_back(std::move(node));
  return raw;
}

Node* Graph::input(Tensor3 value) { return emplace<InputNode>(std::move(value)); }
Node* Graph::conv1d(Node* x, const Conv1dSpec& spec, Param* weight, Param* bias) {
  return emplace<Conv1dNode>(x, spec, weight, bias);
}
Node* Graph::batchnorm(Node* x, const BatchNormState& state) {
  return emplace<BatchNormNode>(x, state);
}
Node* Graph::relu(Node* x) { return emplace<ReluNode>(x); }
Node* Graph::sigmoid(Node* x) { return emplace<SigmoidNode>(x); }
Node* Graph::dropout(Node* x, double rate) { return emplace<DropoutNode>(x, rate); }
Node* Graph::add(Node* a, Node* b) { return emplace<AddNode>(a, b); }
Node* Graph::mul(Node* a, Node* b) { return emplace<MulNode>(a, b); }
Node* Graph::scale(Node* x, double factor) { return emplace<ScaleNode>(x, factor); }
Node* Graph::concat_channels(const std::vector<Node*>& xs) {
  return emplace<ConcatNode>(xs);
}
Node* Graph::slice_channels(Node* x, int start, int count) {
  return emplace<SliceNode>(x, start, count);
}
Node* Graph::ri_magnitude(Node* x) { return emplace<RiMagnitudeNode>(x); }
Node* Graph::mse_loss(Node* pred, Node* target) { return emplace<MseNode>(pred, target); }
Node* Graph::bce2_loss(Node* pred, Node* target) {
  return emplace<Bce2Node>(pred, target);
}
Node* Graph::weighted_sum(Node* a, double wa, Node* b, double wb) {
  return emplace<WeightedSumNode>(a, wa, b, wb);
}

void Graph::forward(bool training) {
  for (auto& n : nodes_) n->forward(training, rng_);
  forward_done_ = true;
  backward_done_ = false;
}

void Graph::backward(Node* loss) {
  if (!forward_done_) throw StateError("backward: no forward pass recorded");
  if (backward_done_) throw StateError("backward: called twice without a new forward");
  for (auto& n : nodes_) {
    n->grad = Tensor3(n->out.shape.batch, n->out.shape.channels, n->out.shape.time);
  }
  if (loss->out.shape.numel() != 1) {
    throw DimensionError("backward: loss must be scalar");
  }
  loss->grad.v[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)->backward();
  backward_done_ = true;
}

}  // namespace mtms
