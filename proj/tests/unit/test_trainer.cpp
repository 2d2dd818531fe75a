#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "halunet/metrics.hpp"
#include "halunet/rng.hpp"
#include "halunet/synth.hpp"
#include "halunet/trainer.hpp"

using namespace halunet;

namespace {

Dataset labelled(int pos, int neg) {
  Dataset ds;
  ds.d_emb = 2;
  std::vector<float> ll{-0.5f}, ent{0.5f}, emb{0.0f, 0.0f};
  for (int i = 0; i < pos + neg; ++i) {
    ds.records.push_back(make_record("r" + std::to_string(i), false, i < pos ? 1 : 0, ll, ent, emb, 2));
  }
  return ds;
}

ParamStore<float> scalar(float value) {
  ParamStore<float> p;
  p.add("w", {1}).value.data[0] = value;
  return p;
}

// Hallucinated iff the mean log-likelihood is below the median.
Dataset threshold_on_mean_ll(int n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.d_emb = 2;
  std::vector<double> means;
  for (int i = 0; i < n; ++i) {
    const int len = 5 + static_cast<int>(rng.below(16));
    std::vector<float> ll(len), ent(len), emb(static_cast<std::size_t>(len) * 2);
    double sum = 0;
    for (int t = 0; t < len; ++t) {
      ll[t] = static_cast<float>(-rng.exponential(1.0));
      sum += ll[t];
      ent[t] = static_cast<float>(rng.exponential(1.0));
    }
    for (auto& e : emb) e = static_cast<float>(rng.normal());
    means.push_back(sum / len);
    ds.records.push_back(make_record("r" + std::to_string(i), false, 0, ll, ent, emb, 2));
  }
  auto sorted = means;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median = sorted[n / 2];
  for (int i = 0; i < n; ++i) ds.records[i].label = means[i] < median ? 1 : 0;
  return ds;
}

}  // namespace

TEST_CASE("stratified split") {
  const Dataset ds = labelled(50, 50);
  const auto [train_set, val_set] = split_train_val(ds, 0.1, 7);
  int vpos = 0, vneg = 0;
  for (const auto& r : val_set.records) (r.label ? vpos : vneg) += 1;
  CHECK(vpos == 5);
  CHECK(vneg == 5);
  CHECK(train_set.size() == 90);

  std::set<std::string> ids;
  for (const auto& r : train_set.records) ids.insert(r.id);
  for (const auto& r : val_set.records) ids.insert(r.id);
  CHECK(ids.size() == 100);

  const auto again = split_train_val(ds, 0.1, 7);
  CHECK(again.first == train_set);
  CHECK(again.second == val_set);
  const auto other = split_train_val(ds, 0.1, 8);
  CHECK(other.second != val_set);

  // Tiny classes still leave one record of each label on both sides.
  const auto [t2, v2] = split_train_val(labelled(2, 30), 0.1, 1);
  int pos_val = 0;
  for (const auto& r : v2.records) pos_val += r.label;
  CHECK(pos_val == 1);
}

TEST_CASE("constant labels are rejected before training") {
  const Dataset ds = labelled(0, 40);
  CHECK_THROWS_AS(split_train_val(ds, 0.1, 1), Error);
  TrainConfig tcfg;
  tcfg.patience = 1;
  ModelConfig mcfg = ModelConfig::from_preset(EncoderPreset::kAllMlp, {Feature::kLogLikelihood},
                                              FusionKind::kConcatMlp, 2);
  CHECK_THROWS_AS(train(ds, mcfg, tcfg), Error);
}

TEST_CASE("adamw: pure decay with zero gradient") {
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  auto p = scalar(2.0f);
  adamw_step(p, cfg, 1);
  CHECK(p.at("w").value.data[0] == doctest::Approx(2.0 * (1 - 0.01 * 0.1)).epsilon(1e-7));
  CHECK_THROWS_AS(adamw_step(p, cfg, 0), Error);
}

TEST_CASE("adamw: constant gradient steps approach lr") {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.0;
  auto p = scalar(0.0f);
  float prev = 0.0f;
  for (int t = 1; t <= 200; ++t) {
    p.at("w").grad.data[0] = -3.0f;
    adamw_step(p, cfg, t);
    const float now = p.at("w").value.data[0];
    CHECK(now - prev == doctest::Approx(1e-3).epsilon(1e-3));
    CHECK(p.at("w").grad.data[0] == 0.0f);
    prev = now;
  }
}

TEST_CASE("adamw: three steps against the hand recurrence") {
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.2;
  auto p = scalar(0.5f);
  double theta = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    const double g = 1.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    theta -= 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.2 * theta);
    p.at("w").grad.data[0] = 1.0f;
    adamw_step(p, cfg, t);
    CHECK(p.at("w").value.data[0] == doctest::Approx(theta).epsilon(1e-6));
  }
}

TEST_CASE("trainer learns a threshold on mean log-likelihood") {
  const Dataset ds = threshold_on_mean_ll(400, 5);
  auto mcfg = ModelConfig::from_preset(EncoderPreset::kAllCnn, {Feature::kLogLikelihood},
                                       FusionKind::kConcatMlp, 2);
  mcfg.d_conv = mcfg.d_h = mcfg.d_mlp = 16;
  TrainConfig tcfg;
  tcfg.lr = 3e-3;
  tcfg.seed = 1;
  const auto res = train(ds, mcfg, tcfg);
  REQUIRE_FALSE(res.report.epochs.empty());
  const auto& best = res.report.epochs[res.report.best_epoch - 1];
  CHECK(best.val_auroc >= 0.95);
  for (const auto& e : res.report.epochs) CHECK(e.val_auroc <= best.val_auroc);

  const auto again = train(ds, mcfg, tcfg);
  CHECK(again.report.to_json() == res.report.to_json());
  for (std::size_t i = 0; i < res.params.size(); ++i) {
    CHECK(again.params.entries()[i].value == res.params.entries()[i].value);
    for (float m : res.params.entries()[i].m.data) CHECK(m == 0.0f);
  }
}

TEST_CASE("early stopping honours patience") {
  SynthConfig sc;
  sc.n_records = 120;
  sc.d_emb = 4;
  sc.separability = 0.0;
  sc.seed = 3;
  const Dataset ds = generate(sc);
  auto mcfg = ModelConfig::from_preset(EncoderPreset::kAllMlp, {Feature::kEntropy},
                                       FusionKind::kConcatMlp, 4);
  mcfg.d_h = mcfg.d_mlp = mcfg.d_conv = 4;
  TrainConfig tcfg;
  tcfg.patience = 1;
  tcfg.lr = 0.05;
  tcfg.max_epochs = 20;
  int calls = 0;
  const auto res = train(ds, mcfg, tcfg, [&](const EpochStats&) { ++calls; });
  CHECK(calls == static_cast<int>(res.report.epochs.size()));
  if (res.report.stopped_early) {
    CHECK(static_cast<int>(res.report.epochs.size()) == res.report.best_epoch + 1);
  }
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
