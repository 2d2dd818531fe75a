#pragma once

// Hallucination-detection metrics.
//
// Scores are uncertainties: higher = more likely hallucinated (label 1).
// Certainty drives selective prediction: records are retained from most to
// least certain (ties keep record order).
//   supervised scorer   (p in [0,1]): uncertainty = p, certainty = |p - 0.5|
//   unsupervised scorer (raw score):  uncertainty = min-max normalized score,
//                                     certainty = 1 - uncertainty

#include <span>
#include <string>
#include <vector>

namespace halunet {

struct ScoredRecord {
  std::string id;
  double uncertainty = 0.0;
  int label = 0;
};
using ScoredSet = std::vector<ScoredRecord>;

enum class ScorerKind { kSupervised, kUnsupervised };

/// What "accuracy" means on a retained set.
enum class RetainedAccuracy {
  kFaithfulFraction,  // fraction of retained records with label 0
  kDetection,         // fraction where 1{uncertainty >= 0.5} == label
};

enum class AuracRule { kRectangle, kTrapezoid };

struct CurvePoint {
  double rejection_fraction = 0.0;
  double retained_accuracy = 0.0;
};

struct F1Result {
  double f1 = 0.0;
  double threshold = 0.0;  // may be -inf / +inf
};

double certainty_supervised(double p);

/// Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie).
double auroc(std::span<const double> scores, std::span<const int> labels);
double auroc(const ScoredSet& set);

/// n points, k = 0..n-1 rejected. With `predictions` (same length as
/// labels) accuracy is prediction == label; otherwise fraction of label 0.
std::vector<CurvePoint> rejection_accuracy_curve(std::span<const int> labels,
                                                 std::span<const double> certainty,
                                                 std::span<const int> predictions = {});

double aurac(std::span<const CurvePoint> curve, AuracRule rule = AuracRule::kRectangle);

/// Accuracy among the ceil(n/2) most certain records.
double ra_at_50(std::span<const int> labels, std::span<const double> certainty,
                std::span<const int> predictions = {});

/// Max F1 for the positive (label 1) class over thresholds; predicted
/// positive iff score >= threshold. Candidates: -inf, midpoints of
/// consecutive distinct scores, +inf. Ties on F1 keep the lowest threshold.
F1Result f1_at_best(std::span<const double> scores, std::span<const int> labels);

double f1_at_threshold(std::span<const double> scores, std::span<const int> labels,
                       double threshold);

/// (x - min) / (max - min); a constant input maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> scores);

struct EvalOptions {
  ScorerKind kind = ScorerKind::kSupervised;
  RetainedAccuracy accuracy = RetainedAccuracy::kFaithfulFraction;
  AuracRule aurac_rule = AuracRule::kRectangle;
};

struct EvalReport {
  std::string scorer;
  std::size_t n = 0;
  double auroc = 0.0;
  double aurac = 0.0;
  double ra_at_50 = 0.0;
  double f1_at_best = 0.0;
  double f1_best_threshold = 0.0;
  std::vector<CurvePoint> rejection_curve;
};

/// Full metric suite. Requires both labels present.
EvalReport evaluate(const ScoredSet& set, const EvalOptions& opts, std::string scorer_name = {});

/// Structured (JSON) rendering; infinite thresholds are written as strings.
std::string eval_report_json(const EvalReport& report);

/// Two-column "rejection_fraction retained_accuracy" text for plotting.
std::string rejection_curve_text(const EvalReport& report);

}  // namespace halunet
