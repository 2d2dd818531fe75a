#include "halunet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "halunet/layers.hpp"
#include "halunet/metrics.hpp"

namespace halunet {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error("train config: lr must be positive");
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw Error("train config: max_epochs must be >= 1");
  if (weight_decay < 0.0) throw Error("train config: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error("train config: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw Error("train config: eps must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error("train config: val_fraction must lie in (0, 1)");
  }
  if (patience < 1) throw Error("train config: patience must be >= 1");
}

std::string TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["best_epoch"] = best_epoch;
  j["stopped_early"] = stopped_early;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auroc", e.val_auroc}});
  }
  j["epochs"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double val_fraction,
                                            std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error("val_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    by_label[ds.records[i].label].push_back(i);
  }
  for (int y = 0; y < 2; ++y) {
    if (by_label[y].size() < 2) {
      throw Error("cannot split: label " + std::to_string(y) + " has " +
                  std::to_string(by_label[y].size()) + " record(s), need at least 2");
    }
  }
  Rng rng(derive_seed(seed, 0x5350u));
  std::vector<char> in_val(ds.records.size(), 0);
  for (auto& idx : by_label) {
    rng.shuffle(idx);
    auto take = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
    for (std::size_t k = 0; k < take; ++k) in_val[idx[k]] = 1;
  }
  Dataset train_set{ds.l_max, ds.d_emb, {}};
  Dataset val_set{ds.l_max, ds.d_emb, {}};
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    (in_val[i] ? val_set : train_set).records.push_back(ds.records[i]);
  }
  return {std::move(train_set), std::move(val_set)};
}

void adamw_step(ParamStore<float>& params, const TrainConfig& cfg, int t) {
  if (t < 1) throw Error("adamw_step: step index must be >= 1");
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const auto lr = static_cast<float>(cfg.lr);
  const auto wd = static_cast<float>(cfg.weight_decay);
  const auto eps = static_cast<float>(cfg.eps);
  const auto fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const auto inv_c1 = static_cast<float>(1.0 / c1), inv_c2 = static_cast<float>(1.0 / c2);
  for (auto& e : params.entries()) {
    auto& theta = e.value.data;
    auto& g = e.grad.data;
    auto& m = e.m.data;
    auto& v = e.v.data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = fb1 * m[i] + (1.0f - fb1) * g[i];
      v[i] = fb2 * v[i] + (1.0f - fb2) * g[i] * g[i];
      const float m_hat = m[i] * inv_c1;
      const float v_hat = v[i] * inv_c2;
      theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * theta[i]);
      g[i] = 0.0f;
    }
  }
}

std::vector<double> predict_dataset(const Dataset& ds, const ParamStore<float>& params,
                                    const ModelConfig& cfg) {
  std::vector<double> out;
  out.reserve(ds.size());
  Tape<float> tape;
  for (const auto& r : ds.records) {
    out.push_back(forward<float>(make_input(r, cfg), params, cfg, &tape).probability);
  }
  return out;
}

double dataset_auroc(const Dataset& ds, const ParamStore<float>& params, const ModelConfig& cfg) {
  const auto p = predict_dataset(ds, params, cfg);
  std::vector<int> labels;
  for (const auto& r : ds.records) labels.push_back(r.label);
  return auroc(p, labels);
}

TrainResult train_with_validation(const Dataset& train_set, const Dataset& val_set,
                                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                                  const EpochCallback& on_epoch) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.d_emb != mcfg.d_emb || train_set.l_max != mcfg.l_max) {
    throw Error("dataset (l_max " + std::to_string(train_set.l_max) + ", d_emb " +
                std::to_string(train_set.d_emb) + ") does not match model config (l_max " +
                std::to_string(mcfg.l_max) + ", d_emb " + std::to_string(mcfg.d_emb) + ")");
  }
  if (train_set.empty()) throw Error("training set is empty");

  Rng init_rng(derive_seed(tcfg.seed, 0x494E4954u));
  TrainResult result;
  result.params = init_params<float>(mcfg, init_rng);
  ParamStore<float>& params = result.params;
  ParamStore<float> best = params;
  double best_auroc = -1.0;
  int since_best = 0;
  int step = 0;

  std::vector<std::size_t> order(train_set.size());
  Tape<float> tape;
  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(tcfg.seed, 0x45504F00u + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      const auto scale = static_cast<float>(1.0 / static_cast<double>(end - start));
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = train_set.records[order[k]];
        const auto out = forward<float>(make_input(r, mcfg), params, mcfg, &tape);
        batch_loss += bce_loss<float>(out.logit, r.label);
        backward<float>(tape, scale * bce_grad<float>(out.logit, r.label), params, mcfg);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batch_index + 1));
      }
      loss_sum += batch_loss;
      adamw_step(params, tcfg, ++step);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.val_auroc = dataset_auroc(val_set, params, mcfg);
    result.report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (stats.val_auroc > best_auroc) {
      best_auroc = stats.val_auroc;
      result.report.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      result.report.stopped_early = epoch < tcfg.max_epochs;
      break;
    }
  }

  // Return the best snapshot's values with fresh optimizer state.
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.entries()[i];
    e.value = best.entries()[i].value;
    std::fill(e.m.data.begin(), e.m.data.end(), 0.0f);
    std::fill(e.v.data.begin(), e.v.data.end(), 0.0f);
  }
  params.zero_grad();
  return result;
}

TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch) {
  tcfg.validate();
  auto [train_set, val_set] = split_train_val(ds, tcfg.val_fraction, tcfg.seed);
  return train_with_validation(train_set, val_set, mcfg, tcfg, on_epoch);
}

}  // namespace halunet
