#pragma once

// Single-pass baselines computed directly from a FeatureRecord.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "halunet/feature_record.hpp"
#include "halunet/metrics.hpp"

namespace halunet {

enum class EntropyAggregation { kMean, kSum };

/// Predictive entropy over the true length (mean by default).
double predictive_entropy(const FeatureRecord& r,
                          EntropyAggregation agg = EntropyAggregation::kMean);

/// -(1/true_len) * sum of token log-likelihoods.
double token_nll(const FeatureRecord& r);

inline constexpr int kLogisticFeatures = 5;
using LogisticFeatureVector = std::array<double, kLogisticFeatures>;

/// [mean ll, min ll, mean entropy, max entropy, true_len / l_max].
LogisticFeatureVector logistic_features(const FeatureRecord& r, int l_max);

struct LogisticOptions {
  double l2 = 1e-4;
  double learning_rate = 0.5;
  int max_iterations = 5000;
  double gradient_tolerance = 1e-9;
};

struct LogisticModel {
  LogisticFeatureVector mean{};
  LogisticFeatureVector scale{};  // per-feature stddev; 1 where the feature is constant
  std::array<double, kLogisticFeatures + 1> weights{};  // weights[5] is the bias

  double predict(const LogisticFeatureVector& raw) const;
  double predict(const FeatureRecord& r, int l_max) const {
    return predict(logistic_features(r, l_max));
  }
  std::string to_json() const;
  static LogisticModel from_json(const std::string& text);
};

/// Regularized mean BCE on standardized features and its gradient:
///   loss = mean_i bce(w . z_i + b, y_i) + (l2 / 2) |w|^2   (bias unpenalized)
double logistic_objective(std::span<const LogisticFeatureVector> standardized,
                          std::span<const int> labels,
                          const std::array<double, kLogisticFeatures + 1>& weights, double l2,
                          std::array<double, kLogisticFeatures + 1>* gradient);

/// Full-batch gradient descent from zero weights. The seed is accepted for
/// interface symmetry with the neural trainer; the procedure itself is
/// deterministic.
LogisticModel logistic_train(const Dataset& ds, std::uint64_t seed,
                             const LogisticOptions& opts = {});

void save_logistic(const LogisticModel& model, const std::filesystem::path& path);
LogisticModel load_logistic(const std::filesystem::path& path);

/// Scores every record of `ds` ("pe", "tnll" are unsupervised raw scores).
ScoredSet score_predictive_entropy(const Dataset& ds,
                                   EntropyAggregation agg = EntropyAggregation::kMean);
ScoredSet score_token_nll(const Dataset& ds);
ScoredSet score_logistic(const Dataset& ds, const LogisticModel& model);

}  // namespace halunet
