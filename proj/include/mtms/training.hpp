// Copyright 2026 MTMS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "mtms/features.hpp"
#include "mtms/model.hpp"

namespace mtms {

// Stage-one loss: mean squared error of the mask plus mean squared error of
// the complex-spectrum estimate, each averaged over its own T*K.
double loss_stage1(const Matrix& irm_hat, const Matrix& irm, const Matrix& ri_hat,
                   const Matrix& ri);

// Stage-two loss: base-2 cross-entropy of the compressed prior SNR,
// predictions clamped to [kProbClamp, 1 - kProbClamp].
double loss_stage2(const Matrix& xibar_hat, const Matrix& xibar);

double total_loss(double l1, double l2, double alpha = 1.0, double beta = 1.0);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  int64_t step = 0;
  // First/second moment buffers keyed by parameter identity, created lazily
  // in registry order on the first step.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected update over the trainable parameters.
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg);

struct TrainOptions {
  int64_t steps = 0;        // > 0: run exactly this many steps
  int max_epochs = 0;       // used when steps == 0
  int patience_epochs = 5;  // early stop on validation loss (epoch mode)
  int batch_frames = 10000;
  uint64_t seed = 1;
  AdamConfig adam;
  double alpha = 1.0;
  double beta = 1.0;
  bool detach_stage2 = false;  // cut gradients from stage two into stage one
};

struct StepRecord {
  int64_t step = 0;
  double loss1 = 0.0;
  double loss2 = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> history;
  int64_t steps_run = 0;
  int epochs_run = 0;
  double best_val_loss = 0.0;
};

// Batches are consecutive frames of the concatenated corpus, shaped
// (1, channels, batch_frames) so causal context is respected; the final
// partial batch of each epoch is kept.
TrainResult train_loop(Model& model, const std::vector<FeatureBundle>& corpus,
                       const TrainOptions& opts,
                       const std::vector<FeatureBundle>* validation = nullptr);

void write_loss_csv(const std::string& path, const std::vector<StepRecord>& history);

}  // namespace mtms
