#include "halunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "halunet/feature_record.hpp"

namespace halunet {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": length mismatch");
}

void count_labels(std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++pos;
    } else if (y == 0) {
      ++neg;
    } else {
      throw Error("labels must be 0 or 1");
    }
  }
}

// Indices sorted by certainty descending; stable so ties keep record order.
std::vector<std::size_t> certainty_order(std::span<const double> certainty) {
  std::vector<std::size_t> order(certainty.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return certainty[a] > certainty[b]; });
  return order;
}

bool retained_correct(std::size_t i, std::span<const int> labels,
                      std::span<const int> predictions) {
  return predictions.empty() ? labels[i] == 0 : predictions[i] == labels[i];
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double certainty_supervised(double p) { return std::abs(p - 0.5); }

double auroc(std::span<const double> scores, std::span<const int> labels) {
  require_same_size(scores.size(), labels.size(), "auroc");
  std::size_t pos = 0, neg = 0;
  count_labels(labels, pos, neg);
  if (pos == 0 || neg == 0) throw Error("auroc needs both labels present");

  // Sweep ascending scores; for each tie group, positives beat every
  // negative seen so far and tie with negatives in the group. Counts are
  // kept in half-units so the numerator is an exact integer.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t half_units = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t gpos = 0, gneg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? gpos : gneg) += 1;
      ++j;
    }
    half_units += gpos * (2 * neg_below + gneg);
    neg_below += gneg;
    i = j;
  }
  return static_cast<double>(half_units) / 2.0 /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc(const ScoredSet& set) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : set) {
    s.push_back(r.uncertainty);
    y.push_back(r.label);
  }
  return auroc(s, y);
}

std::vector<CurvePoint> rejection_accuracy_curve(std::span<const int> labels,
                                                 std::span<const double> certainty,
                                                 std::span<const int> predictions) {
  require_same_size(labels.size(), certainty.size(), "rejection curve");
  if (!predictions.empty()) require_same_size(labels.size(), predictions.size(), "predictions");
  const std::size_t n = labels.size();
  if (n == 0) throw Error("rejection curve needs a nonempty set");
  const auto order = certainty_order(certainty);

  // correct_prefix[m] = correct among the m most certain.
  std::vector<std::size_t> correct_prefix(n + 1, 0);
  for (std::size_t m = 0; m < n; ++m) {
    correct_prefix[m + 1] =
        correct_prefix[m] + (retained_correct(order[m], labels, predictions) ? 1 : 0);
  }
  std::vector<CurvePoint> curve;
  curve.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t kept = n - k;
    curve.push_back({static_cast<double>(k) / static_cast<double>(n),
                     static_cast<double>(correct_prefix[kept]) / static_cast<double>(kept)});
  }
  return curve;
}

double aurac(std::span<const CurvePoint> curve, AuracRule rule) {
  if (curve.empty()) throw Error("aurac of an empty curve");
  if (rule == AuracRule::kRectangle || curve.size() == 1) {
    double sum = 0.0;
    for (const auto& p : curve) sum += p.retained_accuracy;
    return sum / static_cast<double>(curve.size());
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double w = curve[i].rejection_fraction - curve[i - 1].rejection_fraction;
    area += 0.5 * w * (curve[i].retained_accuracy + curve[i - 1].retained_accuracy);
  }
  return area / (curve.back().rejection_fraction - curve.front().rejection_fraction);
}

double ra_at_50(std::span<const int> labels, std::span<const double> certainty,
                std::span<const int> predictions) {
  require_same_size(labels.size(), certainty.size(), "ra@50");
  if (!predictions.empty()) require_same_size(labels.size(), predictions.size(), "predictions");
  const std::size_t n = labels.size();
  if (n == 0) throw Error("ra@50 needs a nonempty set");
  const std::size_t kept = (n + 1) / 2;
  const auto order = certainty_order(certainty);
  std::size_t correct = 0;
  for (std::size_t m = 0; m < kept; ++m) {
    if (retained_correct(order[m], labels, predictions)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(kept);
}

double f1_at_threshold(std::span<const double> scores, std::span<const int> labels,
                       double threshold) {
  require_same_size(scores.size(), labels.size(), "f1");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1) ++tp;
    if (predicted && labels[i] == 0) ++fp;
    if (!predicted && labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

F1Result f1_at_best(std::span<const double> scores, std::span<const int> labels) {
  require_same_size(scores.size(), labels.size(), "f1@best");
  std::size_t pos = 0, neg = 0;
  count_labels(labels, pos, neg);
  if (pos == 0) throw Error("f1@best needs at least one positive label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ascending sweep: at threshold -inf everything is predicted positive;
  // each midpoint above a tie group removes that group.
  std::size_t tp = pos, fp = neg;
  auto f1 = [&]() {
    return tp == 0 ? 0.0
                   : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + (pos - tp));
  };
  F1Result best{f1(), -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const double s = scores[order[i]];
    while (j < order.size() && scores[order[j]] == s) {
      (labels[order[j]] == 1 ? tp : fp) -= 1;
      ++j;
    }
    const double threshold = j < order.size() ? (s + scores[order[j]]) / 2.0
                                              : std::numeric_limits<double>::infinity();
    const double value = f1();
    if (value > best.f1) best = {value, threshold};
    i = j;
  }
  return best;
}

std::vector<double> min_max_normalize(std::span<const double> scores) {
  std::vector<double> out(scores.begin(), scores.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& v : out) v = range > 0.0 ? (v - min) / range : 0.0;
  return out;
}

EvalReport evaluate(const ScoredSet& set, const EvalOptions& opts, std::string scorer_name) {
  std::vector<double> raw;
  std::vector<int> labels;
  for (const auto& r : set) {
    if (!std::isfinite(r.uncertainty)) throw Error("score for '" + r.id + "' is not finite");
    raw.push_back(r.uncertainty);
    labels.push_back(r.label);
  }
  std::vector<double> uncertainty;
  std::vector<double> certainty(raw.size());
  if (opts.kind == ScorerKind::kSupervised) {
    uncertainty = raw;
    for (std::size_t i = 0; i < raw.size(); ++i) certainty[i] = certainty_supervised(raw[i]);
  } else {
    uncertainty = min_max_normalize(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) certainty[i] = 1.0 - uncertainty[i];
  }
  std::vector<int> predictions;
  if (opts.accuracy == RetainedAccuracy::kDetection) {
    for (double u : uncertainty) predictions.push_back(u >= 0.5 ? 1 : 0);
  }

  EvalReport rep;
  rep.scorer = std::move(scorer_name);
  rep.n = set.size();
  rep.auroc = auroc(uncertainty, labels);
  rep.rejection_curve = rejection_accuracy_curve(labels, certainty, predictions);
  rep.aurac = aurac(rep.rejection_curve, opts.aurac_rule);
  rep.ra_at_50 = ra_at_50(labels, certainty, predictions);
  const auto f1 = f1_at_best(uncertainty, labels);
  rep.f1_at_best = f1.f1;
  rep.f1_best_threshold = f1.threshold;
  return rep;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["scorer"] = r.scorer;
  j["n"] = r.n;
  j["auroc"] = r.auroc;
  j["aurac"] = r.aurac;
  j["ra_at_50"] = r.ra_at_50;
  j["f1_at_best"] = r.f1_at_best;
  if (std::isfinite(r.f1_best_threshold)) {
    j["f1_best_threshold"] = r.f1_best_threshold;
  } else {
    j["f1_best_threshold"] = r.f1_best_threshold > 0 ? "inf" : "-inf";
  }
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& p : r.rejection_curve) {
    curve.push_back({p.rejection_fraction, p.retained_accuracy});
  }
  j["rejection_curve"] = std::move(curve);
  return j.dump(2) + "\n";
}

std::string rejection_curve_text(const EvalReport& r) {
  std::ostringstream os;
  os << "# rejection_fraction retained_accuracy\n";
  for (const auto& p : r.rejection_curve) {
    os << format_double(p.rejection_fraction) << ' ' << format_double(p.retained_accuracy)
       << '\n';
  }
  return os.str();
}

}  // namespace halunet
