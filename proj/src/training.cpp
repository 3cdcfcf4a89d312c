// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mtms/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mtms {

namespace {

double mse(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.v.size());
}

}  // namespace

double loss_stage1(const Matrix& irm_hat, const Matrix& irm, const Matrix& ri_hat,
                   const Matrix& ri) {
  require_same_shape(irm_hat, irm, "loss_stage1(irm)");
  require_same_shape(ri_hat, ri, "loss_stage1(ri)");
  if (irm_hat.rows != ri_hat.rows) {
    throw DimensionError("loss_stage1: irm and ri frame counts differ");
  }
  return mse(irm_hat, irm) + mse(ri_hat, ri);
}

double loss_stage2(const Matrix& xibar_hat, const Matrix& xibar) {
  require_same_shape(xibar_hat, xibar, "loss_stage2");
  double s = 0.0;
  for (size_t i = 0; i < xibar_hat.v.size(); ++i) {
    const double p = std::clamp(xibar_hat.v[i], kProbClamp, 1.0 - kProbClamp);
    const double t = xibar.v[i];
    s -= t * std::log2(p) + (1.0 - t) * std::log2(1.0 - p);
  }
  return s / static_cast<double>(xibar_hat.v.size());
}

double total_loss(double l1, double l2, double alpha, double beta) {
  return alpha * l1 + beta * l2;
}

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg) {
  const std::vector<Param*> trainable = params.trainable_params();
  if (state.step == 0 && state.m.empty()) {
    state.m.resize(trainable.size());
    state.v.resize(trainable.size());
    for (size_t i = 0; i < trainable.size(); ++i) {
      state.m[i].assign(trainable[i]->value.size(), 0.0);
      state.v[i].assign(trainable[i]->value.size(), 0.0);
    }
  }
  if (state.m.size() != trainable.size()) {
    throw DimensionError("adam_step: state does not match parameter set");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < trainable.size(); ++i) {
    Param& p = *trainable[i];
    if (state.m[i].size() != p.value.size()) {
      throw DimensionError("adam_step: moment shape mismatch for " + p.name);
    }
    for (size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
      state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

namespace {

struct CorpusView {
  const std::vector<FeatureBundle>* bundles = nullptr;
  std::vector<int64_t> prefix;  // frame offsets, prefix[i] = start of bundle i
  int64_t total = 0;
  int bins = 0;
  int frame_len = 0;
};

CorpusView make_view(const std::vector<FeatureBundle>& corpus) {
  if (corpus.empty()) throw DataError("train_loop: empty corpus");
  CorpusView v;
  v.bundles = &corpus;
  v.bins = corpus[0].bins;
  v.frame_len = corpus[0].frame_len;
  v.prefix.resize(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].bins != v.bins || corpus[i].frame_len != v.frame_len) {
      throw DimensionError("train_loop: inconsistent feature shapes across corpus");
    }
    v.prefix[i] = v.total;
    v.total += corpus[i].frames;
  }
  if (v.total <= 0) throw DataError("train_loop: corpus holds no frames");
  return v;
}

struct Batch {
  Matrix frames, lps, ri;          // inputs
  Matrix irm, clean_ri, xibar;     // targets
};

void copy_rows(const std::vector<float>& src, int src_row, Matrix& dst, int dst_row,
               int cols, int n_rows) {
  for (int r = 0; r < n_rows; ++r) {
    const float* s = src.data() + static_cast<size_t>(src_row + r) * cols;
    double* d = dst.v.data() + static_cast<size_t>(dst_row + r) * cols;
    for (int c = 0; c < cols; ++c) d[c] = s[c];
  }
}

Batch make_batch(const CorpusView& v, int64_t start, int n) {
  const int bins = v.bins;
  Batch b;
  b.frames = Matrix(n, v.frame_len);
  b.lps = Matrix(n, bins);
  b.ri = Matrix(n, 2 * bins);
  b.irm = Matrix(n, bins);
  b.clean_ri = Matrix(n, 2 * bins);
  b.xibar = Matrix(n, bins);
  int filled = 0;
  size_t bi = static_cast<size_t>(
      std::upper_bound(v.prefix.begin(), v.prefix.end(), start) - v.prefix.begin() - 1);
  int64_t local = start - v.prefix[bi];
  while (filled < n) {
    const FeatureBundle& fb = (*v.bundles)[bi];
    const int take = static_cast<int>(
        std::min<int64_t>(n - filled, fb.frames - local));
    copy_rows(fb.win_frames, static_cast<int>(local), b.frames, filled, v.frame_len, take);
    copy_rows(fb.lps, static_cast<int>(local), b.lps, filled, bins, take);
    copy_rows(fb.ri, static_cast<int>(local), b.ri, filled, 2 * bins, take);
    copy_rows(fb.irm, static_cast<int>(local), b.irm, filled, bins, take);
    copy_rows(fb.clean_ri, static_cast<int>(local), b.clean_ri, filled, 2 * bins, take);
    copy_rows(fb.xibar, static_cast<int>(local), b.xibar, filled, bins, take);
    filled += take;
    local = 0;
    ++bi;
  }
  return b;
}

struct StepLosses {
  double l1 = 0.0, l2 = 0.0;
};

// Joint step: one graph, stage-two input built from stage-one outputs so the
// accumulated loss trains both stages end to end.
StepLosses run_joint_step(Model& model, const Batch& b, const TrainOptions& opts,
                          uint64_t graph_seed, bool update) {
  Graph g(graph_seed);
  JointNodes jn = model.build_joint(g, b.frames, b.lps, b.ri);
  Node* irm_t = g.input(matrix_to_tensor(b.irm));
  Node* ri_t = g.input(matrix_to_tensor(b.clean_ri));
  Node* xibar_t = g.input(matrix_to_tensor(b.xibar));
  Node* l1 = g.weighted_sum(g.mse_loss(jn.irm_hat, irm_t), 1.0,
                            g.mse_loss(jn.ri_hat, ri_t), 1.0);
  Node* l2 = g.bce2_loss(jn.xibar_hat, xibar_t);
  Node* total = g.weighted_sum(l1, opts.alpha, l2, opts.beta);
  g.forward(update);
  if (update) {
    model.params().zero_grad();
    g.backward(total);
  }
  return {l1->out.v[0], l2->out.v[0]};
}

// Detached step: stage one and stage two live in separate graphs; stage two
// consumes stage-one outputs as constants.
StepLosses run_detached_step(Model& model, const Batch& b, const TrainOptions& opts,
                             uint64_t seed1, uint64_t seed2, bool update) {
  Graph g1(seed1);
  Node* fr = g1.input(matrix_to_tensor(b.frames));
  Node* lp = g1.input(matrix_to_tensor(b.lps));
  Node* ri = g1.input(matrix_to_tensor(b.ri));
  StageOneNodes s1 = model.build_stage1(g1, fr, lp, ri);
  Node* irm_t = g1.input(matrix_to_tensor(b.irm));
  Node* ri_t = g1.input(matrix_to_tensor(b.clean_ri));
  Node* l1 = g1.weighted_sum(g1.mse_loss(s1.irm_hat, irm_t), 1.0,
                             g1.mse_loss(s1.ri_hat, ri_t), 1.0);
  Node* l1_scaled = g1.scale(l1, opts.alpha);
  g1.forward(update);

  const Matrix irm_hat = tensor_to_matrix(s1.irm_hat->out);
  const Matrix ri_hat = tensor_to_matrix(s1.ri_hat->out);
  const Matrix noisy_mag = magnitude_from_lps(b.lps);
  Matrix avg(irm_hat.rows, irm_hat.cols);
  for (int t = 0; t < avg.rows; ++t) {
    for (int k = 0; k < avg.cols; ++k) {
      const double re = ri_hat.at(t, k);
      const double im = ri_hat.at(t, avg.cols + k);
      const double m_ri = std::sqrt(re * re + im * im);
      avg.at(t, k) = 0.5 * (m_ri + irm_hat.at(t, k) * noisy_mag.at(t, k));
    }
  }

  Graph g2(seed2);
  Node* avg_in = g2.input(matrix_to_tensor(avg));
  Node* mag_in = g2.input(matrix_to_tensor(noisy_mag));
  Node* xibar_hat = model.build_stage2(g2, avg_in, mag_in);
  Node* xibar_t = g2.input(matrix_to_tensor(b.xibar));
  Node* l2 = g2.bce2_loss(xibar_hat, xibar_t);
  Node* l2_scaled = g2.scale(l2, opts.beta);
  g2.forward(update);
  if (update) {
    model.params().zero_grad();
    g1.backward(l1_scaled);
    g2.backward(l2_scaled);
  }
  return {l1->out.v[0], l2->out.v[0]};
}

StepLosses run_step(Model& model, const Batch& b, const TrainOptions& opts, Rng& rng,
                    bool update) {
  const uint64_t s1 = rng.next();
  const uint64_t s2 = rng.next();
  if (opts.detach_stage2) return run_detached_step(model, b, opts, s1, s2, update);
  return run_joint_step(model, b, opts, s1, update);
}

}  // namespace

TrainResult train_loop(Model& model, const std::vector<FeatureBundle>& corpus,
                       const TrainOptions& opts,
                       const std::vector<FeatureBundle>* validation) {
  const CorpusView view = make_view(corpus);
  if (opts.batch_frames <= 0) throw ConfigError("train_loop: batch_frames must be > 0");
  const int batch_frames = static_cast<int>(
      std::min<int64_t>(opts.batch_frames, view.total));

  Rng rng(opts.seed);
  AdamState adam;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  int64_t cursor = 0;
  int epochs_without_improvement = 0;
  const int64_t max_steps =
      opts.steps > 0 ? opts.steps : std::numeric_limits<int64_t>::max();
  const int max_epochs = opts.steps > 0 ? std::numeric_limits<int>::max()
                                        : std::max(opts.max_epochs, 1);
  int64_t step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < max_epochs && !stop; ++epoch) {
    cursor = 0;
    while (cursor < view.total && !stop) {
      const int n = static_cast<int>(
          std::min<int64_t>(batch_frames, view.total - cursor));
      const Batch b = make_batch(view, cursor, n);
      cursor += n;
      const StepLosses losses = run_step(model, b, opts, rng, /*update=*/true);
      adam_step(model.params(), adam, opts.adam);
      ++step;
      result.history.push_back(
          {step, losses.l1, losses.l2,
           total_loss(losses.l1, losses.l2, opts.alpha, opts.beta)});
      if (step >= max_steps) stop = true;
    }
    result.epochs_run = epoch + 1;
    if (opts.steps == 0 && validation != nullptr && !validation->empty() && !stop) {
      const CorpusView vv = make_view(*validation);
      double vloss = 0.0;
      int64_t vframes = 0;
      int64_t vcursor = 0;
      while (vcursor < vv.total) {
        const int n = static_cast<int>(
            std::min<int64_t>(batch_frames, vv.total - vcursor));
        const Batch vb = make_batch(vv, vcursor, n);
        vcursor += n;
        const StepLosses vl = run_step(model, vb, opts, rng, /*update=*/false);
        vloss += total_loss(vl.l1, vl.l2, opts.alpha, opts.beta) * n;
        vframes += n;
      }
      vloss /= static_cast<double>(vframes);
      if (vloss < result.best_val_loss - 1e-12) {
        result.best_val_loss = vloss;
        epochs_without_improvement = 0;
      } else if (++epochs_without_improvement >= opts.patience_epochs) {
        stop = true;
      }
    }
  }
  result.steps_run = step;
  return result;
}

void write_loss_csv(const std::string& path, const std::vector<StepRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open loss csv for writing: " + path);
  out << "step,loss1,loss2,total\n";
  out << std::setprecision(12);
  for (const StepRecord& r : history) {
    out << r.step << ',' << r.loss1 << ',' << r.loss2 << ',' << r.total << '\n';
  }
  if (!out) throw IoError("short write to loss csv: " + path);
}

}  // namespace mtms
