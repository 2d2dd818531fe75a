#pragma once

// AdamW training with a stratified validation hold-out and early stopping on
// validation AUROC. Single-threaded and bit-reproducible for a fixed seed.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "halunet/feature_record.hpp"
#include "halunet/model.hpp"

namespace halunet {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 32;
  int max_epochs = 20;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double val_fraction = 0.1;
  int patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_auroc = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based index of the max val_auroc, first on ties
  bool stopped_early = false;

  std::string to_json() const;
};

struct TrainResult {
  ParamStore<float> params;
  TrainReport report;
};

/// Stratified by label, shuffled by seed; returns (train, val). Each label
/// class contributes round(val_fraction * class size) records to val,
/// clamped to [1, class size - 1]. Both outputs keep the input order.
std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double val_fraction,
                                            std::uint64_t seed);

/// One AdamW update with bias correction at step t >= 1, then zeroes grads:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
void adamw_step(ParamStore<float>& params, const TrainConfig& cfg, int t);

/// Probability per record, in dataset order.
std::vector<double> predict_dataset(const Dataset& ds, const ParamStore<float>& params,
                                    const ModelConfig& cfg);

/// AUROC of `params` on `ds` (labels from the records).
double dataset_auroc(const Dataset& ds, const ParamStore<float>& params, const ModelConfig& cfg);

using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch = {});

/// Same, with a caller-supplied split (no internal hold-out).
TrainResult train_with_validation(const Dataset& train_set, const Dataset& val_set,
                                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                                  const EpochCallback& on_epoch = {});

}  // namespace halunet
