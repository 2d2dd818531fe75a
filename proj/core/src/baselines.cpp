#include "halunet/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "halunet/layers.hpp"

namespace halunet {

double predictive_entropy(const FeatureRecord& r, EntropyAggregation agg) {
  double sum = 0.0;
  for (int t = 0; t < r.true_len; ++t) sum += r.entropies[t];
  return agg == EntropyAggregation::kSum ? sum : sum / r.true_len;
}

double token_nll(const FeatureRecord& r) {
  double sum = 0.0;
  for (int t = 0; t < r.true_len; ++t) sum += r.log_likelihoods[t];
  return -sum / r.true_len;
}

LogisticFeatureVector logistic_features(const FeatureRecord& r, int l_max) {
  double ll_sum = 0.0, ent_sum = 0.0;
  double ll_min = r.log_likelihoods[0];
  double ent_max = r.entropies[0];
  for (int t = 0; t < r.true_len; ++t) {
    ll_sum += r.log_likelihoods[t];
    ent_sum += r.entropies[t];
    ll_min = std::min<double>(ll_min, r.log_likelihoods[t]);
    ent_max = std::max<double>(ent_max, r.entropies[t]);
  }
  const double n = r.true_len;
  return {ll_sum / n, ll_min, ent_sum / n, ent_max, n / l_max};
}

double LogisticModel::predict(const LogisticFeatureVector& raw) const {
  double z = weights[kLogisticFeatures];
  for (int j = 0; j < kLogisticFeatures; ++j) z += weights[j] * (raw[j] - mean[j]) / scale[j];
  return sigmoid(z);
}

std::string LogisticModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "halunet-logistic";
  j["version"] = 1;
  j["mean"] = mean;
  j["scale"] = scale;
  j["weights"] = weights;
  return j.dump(2) + "\n";
}

LogisticModel LogisticModel::from_json(const std::string& text) {
  LogisticModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != "halunet-logistic") {
      throw Error("not a logistic model file");
    }
    m.mean = j.at("mean").get<LogisticFeatureVector>();
    m.scale = j.at("scale").get<LogisticFeatureVector>();
    m.weights = j.at("weights").get<std::array<double, kLogisticFeatures + 1>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("logistic model: ") + e.what());
  }
  return m;
}

double logistic_objective(std::span<const LogisticFeatureVector> z, std::span<const int> labels,
                          const std::array<double, kLogisticFeatures + 1>& w, double l2,
                          std::array<double, kLogisticFeatures + 1>* gradient) {
  const double n = static_cast<double>(z.size());
  double loss = 0.0;
  std::array<double, kLogisticFeatures + 1> g{};
  for (std::size_t i = 0; i < z.size(); ++i) {
    double s = w[kLogisticFeatures];
    for (int j = 0; j < kLogisticFeatures; ++j) s += w[j] * z[i][j];
    loss += bce_loss<double>(s, labels[i]);
    const double d = bce_grad<double>(s, labels[i]);
    for (int j = 0; j < kLogisticFeatures; ++j) g[j] += d * z[i][j];
    g[kLogisticFeatures] += d;
  }
  loss /= n;
  for (auto& v : g) v /= n;
  for (int j = 0; j < kLogisticFeatures; ++j) {
    loss += 0.5 * l2 * w[j] * w[j];
    g[j] += l2 * w[j];
  }
  if (gradient) *gradient = g;
  return loss;
}

LogisticModel logistic_train(const Dataset& ds, std::uint64_t /*seed*/,
                             const LogisticOptions& opts) {
  std::vector<LogisticFeatureVector> x;
  std::vector<int> labels;
  bool has0 = false, has1 = false;
  for (const auto& r : ds.records) {
    x.push_back(logistic_features(r, ds.l_max));
    labels.push_back(r.label);
    (r.label == 1 ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw Error("logistic regression needs both labels in the training set");

  LogisticModel m;
  const double n = static_cast<double>(x.size());
  for (int j = 0; j < kLogisticFeatures; ++j) {
    double mu = 0.0;
    for (const auto& v : x) mu += v[j];
    mu /= n;
    double var = 0.0;
    for (const auto& v : x) var += (v[j] - mu) * (v[j] - mu);
    var /= n;
    m.mean[j] = mu;
    m.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  for (auto& v : x) {
    for (int j = 0; j < kLogisticFeatures; ++j) v[j] = (v[j] - m.mean[j]) / m.scale[j];
  }

  std::array<double, kLogisticFeatures + 1> g{};
  for (int it = 0; it < opts.max_iterations; ++it) {
    logistic_objective(x, labels, m.weights, opts.l2, &g);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    if (std::sqrt(norm) < opts.gradient_tolerance) break;
    for (int j = 0; j <= kLogisticFeatures; ++j) m.weights[j] -= opts.learning_rate * g[j];
  }
  return m;
}

void save_logistic(const LogisticModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write logistic model '" + path.string() + "'");
  out << model.to_json();
}

LogisticModel load_logistic(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open logistic model '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return LogisticModel::from_json(buf.str());
}

ScoredSet score_predictive_entropy(const Dataset& ds, EntropyAggregation agg) {
  ScoredSet out;
  for (const auto& r : ds.records) out.push_back({r.id, predictive_entropy(r, agg), r.label});
  return out;
}

ScoredSet score_token_nll(const Dataset& ds) {
  ScoredSet out;
  for (const auto& r : ds.records) out.push_back({r.id, token_nll(r), r.label});
  return out;
}

ScoredSet score_logistic(const Dataset& ds, const LogisticModel& model) {
  ScoredSet out;
  for (const auto& r : ds.records) out.push_back({r.id, model.predict(r, ds.l_max), r.label});
  return out;
}

}  // namespace halunet
