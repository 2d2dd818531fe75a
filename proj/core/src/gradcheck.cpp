#include "halunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "halunet/layers.hpp"

namespace halunet {
namespace {

std::vector<char> relu_pattern(const Tape<double>& tape) {
  std::vector<char> bits;
  auto append = [&bits](const std::vector<double>& v) {
    for (double x : v) bits.push_back(x > 0.0 ? 1 : 0);
  };
  for (const auto& b : tape.branches) {
    append(b.hidden);
    append(b.act1);
    append(b.act2);
  }
  append(tape.fusion_hidden);
  return bits;
}

double loss_at(const ModelInput<double>& in, const ParamStore<double>& params,
               const ModelConfig& cfg, int label, std::vector<char>* pattern) {
  Tape<double> tape;
  const auto r = forward<double>(in, params, cfg, &tape);
  if (pattern) *pattern = relu_pattern(tape);
  return bce_loss<double>(r.logit, label);
}

}  // namespace

GradCheckReport check_gradients(const ModelConfig& cfg, ParamStore<double> params,
                                const InputBuffer64& input, int label,
                                const GradCheckOptions& opts) {
  const auto in = input.view();
  GradCheckReport report;
  report.config_json = cfg.to_json();

  params.zero_grad();
  Tape<double> tape;
  const auto base = forward<double>(in, params, cfg, &tape);
  const auto base_pattern = relu_pattern(tape);
  backward<double>(tape, bce_grad<double>(base.logit, label), params, cfg);

  std::vector<char> pattern;
  bool kink = false;
  auto central = [&](ParamEntry<double>& entry, std::size_t i, double eps) {
    const double original = entry.value.data[i];
    entry.value.data[i] = original + eps;
    const double lp = loss_at(in, params, cfg, label, &pattern);
    kink |= pattern != base_pattern;
    entry.value.data[i] = original - eps;
    const double lm = loss_at(in, params, cfg, label, &pattern);
    kink |= pattern != base_pattern;
    entry.value.data[i] = original;
    return (lp - lm) / (2.0 * eps);
  };

  for (auto& entry : params.entries()) {
    TensorGradCheck tc;
    tc.name = entry.name;
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      kink = false;
      double numeric = central(entry, i, opts.epsilon);
      if (opts.scheme == FiniteDifference::kRichardson) {
        numeric = (4.0 * central(entry, i, opts.epsilon / 2.0) - numeric) / 3.0;
      }
      if (kink) {
        ++tc.skipped_kinks;
        continue;
      }
      const double analytic = entry.grad.data[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), opts.denominator_floor});
      tc.max_rel_error = std::max(tc.max_rel_error, std::abs(analytic - numeric) / denom);
      ++tc.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.checked += tc.checked;
    report.skipped_kinks += tc.skipped_kinks;
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

ModelConfig random_small_config(Rng& rng, int index) {
  static const EncoderPreset kPresets[] = {EncoderPreset::kAllCnn, EncoderPreset::kMixed,
                                           EncoderPreset::kAllMlp};
  std::vector<Feature> features = {Feature::kLogLikelihood, Feature::kEntropy,
                                   Feature::kEmbedding};
  rng.shuffle(features);
  // Every fourth config uses a strict subset of the features.
  if (index % 4 == 3) features.resize(1 + rng.below(2));

  const auto fusion = (index / 3) % 2 == 0 ? FusionKind::kAttention : FusionKind::kConcatMlp;
  const int d_emb = 2 + static_cast<int>(rng.below(4));
  ModelConfig cfg = ModelConfig::from_preset(kPresets[index % 3], features, fusion, d_emb);
  cfg.l_max = 4 + static_cast<int>(rng.below(5));
  cfg.d_conv = cfg.d_h = 3 + static_cast<int>(rng.below(4));
  cfg.d_mlp = 3 + static_cast<int>(rng.below(4));
  cfg.d_a = 2 + static_cast<int>(rng.below(4));
  cfg.pooling_masked = index % 5 != 4;
  cfg.validate();
  return cfg;
}

FeatureRecord random_record(const ModelConfig& cfg, Rng& rng, const std::string& id) {
  const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.l_max)));
  std::vector<float> ll(n), ent(n), emb(static_cast<std::size_t>(n) * cfg.d_emb);
  for (int t = 0; t < n; ++t) {
    ll[t] = static_cast<float>(-rng.uniform(0.0, 3.0));
    ent[t] = static_cast<float>(rng.uniform(0.0, 3.0));
  }
  for (auto& e : emb) e = static_cast<float>(rng.normal());
  const int label = rng.uniform() < 0.5 ? 1 : 0;
  return make_record(id, false, label, ll, ent, emb, cfg.d_emb, cfg.l_max);
}

GradCheckReport gradcheck_config(const ModelConfig& cfg, Rng& rng, const GradCheckOptions& opts) {
  auto params = init_params<double>(cfg, rng);
  // Nonzero biases so every bias path carries gradient.
  for (auto& e : params.entries()) {
    if (e.value.shape.size() == 1 && e.name.find("bias") != std::string::npos) {
      for (auto& v : e.value.data) v = rng.uniform(-0.2, 0.2);
    }
  }
  const auto record = random_record(cfg, rng, "gradcheck");
  return check_gradients(cfg, std::move(params), make_input64(record, cfg), record.label, opts);
}

GradCheckReport random_gradcheck(std::uint64_t seed, int index, const GradCheckOptions& opts) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  const ModelConfig cfg = random_small_config(rng, index);
  return gradcheck_config(cfg, rng, opts);
}

}  // namespace halunet
