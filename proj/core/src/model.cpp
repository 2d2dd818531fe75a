#include "halunet/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "halunet/layers.hpp"

namespace halunet {
namespace {

using nlohmann::json;

std::string param_name(Feature f, const char* layer, const char* kind) {
  return to_string(f) + "." + layer + "." + kind;
}

template <class Real>
std::span<const Real> value(const ParamStore<Real>& p, const std::string& name) {
  return p.at(name).value.span();
}

template <class Real>
std::span<Real> grad(ParamStore<Real>& p, const std::string& name) {
  return p.at(name).grad.span();
}

template <class Real>
std::span<const Real> feature_input(const ModelInput<Real>& in, Feature f) {
  switch (f) {
    case Feature::kLogLikelihood: return in.log_likelihoods;
    case Feature::kEntropy: return in.entropies;
    case Feature::kEmbedding: return in.embeddings;
  }
  return {};
}

template <class Real>
void resize(std::vector<Real>& v, std::size_t n) {
  v.assign(n, Real{0});
}

template <class Real>
void forward_branch(const BranchSpec& spec, const ModelInput<Real>& in,
                    const ParamStore<Real>& p, const ModelConfig& cfg,
                    typename Tape<Real>::Branch& b) {
  const int c_in = cfg.input_channels(spec.feature);
  const int len = cfg.pooling_masked ? in.true_len : in.l_max;
  const auto x = feature_input(in, spec.feature);
  b.len = len;
  resize(b.h, static_cast<std::size_t>(cfg.d_h));

  if (spec.encoder == EncoderKind::kMlpPool) {
    resize(b.pooled, static_cast<std::size_t>(c_in));
    resize(b.hidden, static_cast<std::size_t>(cfg.d_mlp));
    masked_mean_pool<Real>(x, c_in, len, b.pooled);
    linear_forward<Real>(b.pooled, 1, c_in, value(p, param_name(spec.feature, "fc1", "weight")),
                         value(p, param_name(spec.feature, "fc1", "bias")), cfg.d_mlp, b.hidden);
    relu_inplace<Real>(b.hidden);
    linear_forward<Real>(b.hidden, 1, cfg.d_mlp,
                         value(p, param_name(spec.feature, "fc2", "weight")),
                         value(p, param_name(spec.feature, "fc2", "bias")), cfg.d_h, b.h);
    return;
  }

  const auto L = static_cast<std::size_t>(len);
  resize(b.col1, L * c_in * kConvWidth);
  resize(b.act1, L * cfg.d_conv);
  resize(b.col2, L * cfg.d_conv * kConvWidth);
  resize(b.act2, L * cfg.d_conv);
  conv1d_forward<Real>(x, len, c_in, value(p, param_name(spec.feature, "conv1", "weight")),
                       value(p, param_name(spec.feature, "conv1", "bias")), cfg.d_conv, b.col1,
                       b.act1);
  relu_inplace<Real>(b.act1);
  conv1d_forward<Real>(b.act1, len, cfg.d_conv,
                       value(p, param_name(spec.feature, "conv2", "weight")),
                       value(p, param_name(spec.feature, "conv2", "bias")), cfg.d_conv, b.col2,
                       b.act2);
  relu_inplace<Real>(b.act2);
  masked_mean_pool<Real>(b.act2, cfg.d_conv, len, b.h);
}

template <class Real>
void backward_branch(const BranchSpec& spec, ParamStore<Real>& p, const ModelConfig& cfg,
                     typename Tape<Real>::Branch& b, std::span<const Real> dh, Tape<Real>& tape) {
  const int c_in = cfg.input_channels(spec.feature);
  const Feature f = spec.feature;

  if (spec.encoder == EncoderKind::kMlpPool) {
    resize(tape.d_hidden, static_cast<std::size_t>(cfg.d_mlp));
    linear_backward<Real>(b.hidden, 1, cfg.d_mlp, value(p, param_name(f, "fc2", "weight")),
                          cfg.d_h, dh, grad(p, param_name(f, "fc2", "weight")),
                          grad(p, param_name(f, "fc2", "bias")), tape.d_hidden);
    relu_backward_inplace<Real>(b.hidden, tape.d_hidden);
    linear_backward<Real>(b.pooled, 1, c_in, value(p, param_name(f, "fc1", "weight")), cfg.d_mlp,
                          tape.d_hidden, grad(p, param_name(f, "fc1", "weight")),
                          grad(p, param_name(f, "fc1", "bias")), {});
    return;
  }

  const auto L = static_cast<std::size_t>(b.len);
  resize(tape.d_act2, L * cfg.d_conv);
  resize(tape.d_act1, L * cfg.d_conv);
  resize(tape.d_col, L * cfg.d_conv * kConvWidth);
  masked_mean_pool_backward<Real>(dh, cfg.d_conv, b.len, tape.d_act2);
  relu_backward_inplace<Real>(b.act2, tape.d_act2);
  conv1d_backward<Real>(b.col2, b.len, cfg.d_conv, value(p, param_name(f, "conv2", "weight")),
                        cfg.d_conv, tape.d_act2, grad(p, param_name(f, "conv2", "weight")),
                        grad(p, param_name(f, "conv2", "bias")), tape.d_col, tape.d_act1);
  relu_backward_inplace<Real>(b.act1, tape.d_act1);
  conv1d_backward<Real>(b.col1, b.len, c_in, value(p, param_name(f, "conv1", "weight")),
                        cfg.d_conv, tape.d_act1, grad(p, param_name(f, "conv1", "weight")),
                        grad(p, param_name(f, "conv1", "bias")), {}, {});
}

const char* kAttnProj = "fusion.attn.proj";
const char* kAttnVec = "fusion.attn.vec";
const char* kFusionFc1W = "fusion.fc1.weight";
const char* kFusionFc1B = "fusion.fc1.bias";
const char* kFusionFc2W = "fusion.fc2.weight";
const char* kFusionFc2B = "fusion.fc2.bias";
const char* kHeadW = "head.weight";
const char* kHeadB = "head.bias";

}  // namespace

std::string to_string(Feature f) {
  switch (f) {
    case Feature::kLogLikelihood: return "ll";
    case Feature::kEntropy: return "ent";
    case Feature::kEmbedding: return "emb";
  }
  return "?";
}

std::string to_string(EncoderKind e) { return e == EncoderKind::kCnn ? "cnn" : "mlp_pool"; }

std::string to_string(FusionKind f) {
  return f == FusionKind::kAttention ? "attention" : "concat_mlp";
}

std::string to_string(EncoderPreset p) {
  switch (p) {
    case EncoderPreset::kAllCnn: return "all-cnn";
    case EncoderPreset::kMixed: return "mixed";
    case EncoderPreset::kAllMlp: return "all-mlp";
  }
  return "?";
}

Feature parse_feature(const std::string& s) {
  if (s == "ll") return Feature::kLogLikelihood;
  if (s == "ent") return Feature::kEntropy;
  if (s == "emb") return Feature::kEmbedding;
  throw Error("unknown feature '" + s + "' (expected ll, ent or emb)");
}

EncoderKind parse_encoder(const std::string& s) {
  if (s == "cnn") return EncoderKind::kCnn;
  if (s == "mlp_pool" || s == "mlp") return EncoderKind::kMlpPool;
  throw Error("unknown branch encoder '" + s + "'");
}

FusionKind parse_fusion(const std::string& s) {
  if (s == "attention") return FusionKind::kAttention;
  if (s == "concat" || s == "concat_mlp") return FusionKind::kConcatMlp;
  throw Error("unknown fusion '" + s + "' (expected attention or concat)");
}

EncoderPreset parse_preset(const std::string& s) {
  if (s == "all-cnn") return EncoderPreset::kAllCnn;
  if (s == "mixed") return EncoderPreset::kMixed;
  if (s == "all-mlp") return EncoderPreset::kAllMlp;
  throw Error("unknown encoder preset '" + s + "' (expected all-cnn, mixed or all-mlp)");
}

std::vector<Feature> parse_feature_list(const std::string& s) {
  std::vector<Feature> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_feature(item));
  }
  if (out.empty()) throw Error("feature list is empty");
  return out;
}

ModelConfig ModelConfig::from_preset(EncoderPreset preset, const std::vector<Feature>& features,
                                     FusionKind fusion, int d_emb) {
  ModelConfig cfg;
  cfg.branches.clear();
  for (Feature f : features) {
    EncoderKind enc = EncoderKind::kCnn;
    if (preset == EncoderPreset::kAllMlp) enc = EncoderKind::kMlpPool;
    if (preset == EncoderPreset::kMixed && f != Feature::kEmbedding) enc = EncoderKind::kMlpPool;
    cfg.branches.push_back({f, enc});
  }
  cfg.fusion = fusion;
  cfg.d_emb = d_emb;
  cfg.validate();
  return cfg;
}

void ModelConfig::validate() const {
  if (branches.empty()) throw Error("model config: at least one feature must be enabled");
  std::set<Feature> seen;
  for (const auto& b : branches) {
    if (!seen.insert(b.feature).second) {
      throw Error("model config: feature '" + to_string(b.feature) + "' listed twice");
    }
    if (b.encoder == EncoderKind::kCnn && d_conv != d_h) {
      throw Error("model config: cnn branches need d_conv == d_h");
    }
  }
  if (d_emb < 1 || l_max < 1 || d_conv < 1 || d_h < 1 || d_mlp < 1 || d_a < 1) {
    throw Error("model config: dimensions must be positive");
  }
}

std::string ModelConfig::to_json() const {
  json j;
  json branch_list = json::array();
  for (const auto& b : branches) {
    branch_list.push_back({{"feature", to_string(b.feature)}, {"encoder", to_string(b.encoder)}});
  }
  j["branches"] = branch_list;
  j["fusion"] = to_string(fusion);
  j["d_emb"] = d_emb;
  j["l_max"] = l_max;
  j["d_conv"] = d_conv;
  j["d_h"] = d_h;
  j["d_mlp"] = d_mlp;
  j["d_a"] = d_a;
  j["pooling_masked"] = pooling_masked;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text, const ModelConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("model config: expected a JSON object");
  ModelConfig cfg = base;
  try {
    if (j.contains("features") || j.contains("encoder")) {
      std::vector<Feature> features;
      if (!j.contains("features")) {
        for (const auto& b : cfg.branches) features.push_back(b.feature);
      } else if (j.at("features").is_string()) {
        features = parse_feature_list(j.at("features").get<std::string>());
      } else {
        for (const auto& f : j.at("features")) features.push_back(parse_feature(f.get<std::string>()));
      }
      EncoderPreset preset = EncoderPreset::kAllCnn;
      if (j.contains("encoder")) {
        preset = parse_preset(j.at("encoder").get<std::string>());
      } else if (!cfg.branches.empty() &&
                 std::all_of(cfg.branches.begin(), cfg.branches.end(),
                             [](const BranchSpec& b) { return b.encoder == EncoderKind::kMlpPool; })) {
        preset = EncoderPreset::kAllMlp;
      }
      cfg.branches = from_preset(preset, features, cfg.fusion, cfg.d_emb).branches;
    }
    if (j.contains("branches")) {
      cfg.branches.clear();
      for (const auto& b : j.at("branches")) {
        cfg.branches.push_back({parse_feature(b.at("feature").get<std::string>()),
                                parse_encoder(b.at("encoder").get<std::string>())});
      }
    }
    if (j.contains("fusion")) cfg.fusion = parse_fusion(j.at("fusion").get<std::string>());
    cfg.d_emb = j.value("d_emb", cfg.d_emb);
    cfg.l_max = j.value("l_max", cfg.l_max);
    cfg.d_conv = j.value("d_conv", cfg.d_conv);
    cfg.d_h = j.value("d_h", cfg.d_h);
    cfg.d_mlp = j.value("d_mlp", cfg.d_mlp);
    cfg.d_a = j.value("d_a", cfg.d_a);
    cfg.pooling_masked = j.value("pooling_masked", cfg.pooling_masked);
  } catch (const json::exception& e) {
    throw Error(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::from_json(const std::string& text) { return from_json(text, ModelConfig{}); }

std::vector<ParamSpec> parameter_manifest(const ModelConfig& cfg) {
  cfg.validate();
  using S = std::size_t;
  std::vector<ParamSpec> out;
  for (const auto& b : cfg.branches) {
    const int c_in = cfg.input_channels(b.feature);
    if (b.encoder == EncoderKind::kCnn) {
      out.push_back({param_name(b.feature, "conv1", "weight"),
                     {S(cfg.d_conv), S(c_in), S(kConvWidth)}, InitKind::kKaiming,
                     c_in * kConvWidth, cfg.d_conv});
      out.push_back({param_name(b.feature, "conv1", "bias"), {S(cfg.d_conv)}});
      out.push_back({param_name(b.feature, "conv2", "weight"),
                     {S(cfg.d_conv), S(cfg.d_conv), S(kConvWidth)}, InitKind::kKaiming,
                     cfg.d_conv * kConvWidth, cfg.d_conv});
      out.push_back({param_name(b.feature, "conv2", "bias"), {S(cfg.d_conv)}});
    } else {
      out.push_back({param_name(b.feature, "fc1", "weight"), {S(cfg.d_mlp), S(c_in)},
                     InitKind::kKaiming, c_in, cfg.d_mlp});
      out.push_back({param_name(b.feature, "fc1", "bias"), {S(cfg.d_mlp)}});
      out.push_back({param_name(b.feature, "fc2", "weight"), {S(cfg.d_h), S(cfg.d_mlp)},
                     InitKind::kKaiming, cfg.d_mlp, cfg.d_h});
      out.push_back({param_name(b.feature, "fc2", "bias"), {S(cfg.d_h)}});
    }
  }
  if (cfg.fusion == FusionKind::kAttention) {
    out.push_back({kAttnProj, {S(cfg.d_a), S(cfg.d_h)}, InitKind::kXavier, cfg.d_h, cfg.d_a});
    out.push_back({kAttnVec, {S(cfg.d_a)}, InitKind::kXavier, cfg.d_a, 1});
  } else {
    const int concat = cfg.num_branches() * cfg.d_h;
    out.push_back({kFusionFc1W, {S(cfg.d_mlp), S(concat)}, InitKind::kKaiming, concat,
                   cfg.d_mlp});
    out.push_back({kFusionFc1B, {S(cfg.d_mlp)}});
    out.push_back({kFusionFc2W, {S(cfg.d_h), S(cfg.d_mlp)}, InitKind::kKaiming, cfg.d_mlp,
                   cfg.d_h});
    out.push_back({kFusionFc2B, {S(cfg.d_h)}});
  }
  out.push_back({kHeadW, {S(cfg.d_h)}, InitKind::kXavier, cfg.d_h, 1});
  out.push_back({kHeadB, {S(1)}});
  return out;
}

template <class Real>
ParamStore<Real> init_params(const ModelConfig& cfg, Rng& rng) {
  ParamStore<Real> store;
  for (const auto& spec : parameter_manifest(cfg)) {
    auto& entry = store.add(spec.name, spec.shape);
    switch (spec.init) {
      case InitKind::kKaiming: kaiming_uniform<Real>(entry.value.span(), spec.fan_in, rng); break;
      case InitKind::kXavier:
        xavier_uniform<Real>(entry.value.span(), spec.fan_in, spec.fan_out, rng);
        break;
      case InitKind::kZero: break;
    }
  }
  return store;
}

ModelInput<float> make_input(const FeatureRecord& r, const ModelConfig& cfg) {
  if (r.log_likelihoods.size() != static_cast<std::size_t>(cfg.l_max) ||
      r.embeddings.size() != static_cast<std::size_t>(cfg.l_max) * cfg.d_emb) {
    throw Error("record '" + r.id + "' does not match model config (l_max " +
                std::to_string(cfg.l_max) + ", d_emb " + std::to_string(cfg.d_emb) + ")");
  }
  return {r.log_likelihoods, r.entropies, r.embeddings, r.true_len, cfg.l_max, cfg.d_emb};
}

InputBuffer64 make_input64(const FeatureRecord& r, const ModelConfig& cfg) {
  auto in = make_input(r, cfg);
  InputBuffer64 out;
  out.log_likelihoods.assign(in.log_likelihoods.begin(), in.log_likelihoods.end());
  out.entropies.assign(in.entropies.begin(), in.entropies.end());
  out.embeddings.assign(in.embeddings.begin(), in.embeddings.end());
  out.true_len = in.true_len;
  out.l_max = in.l_max;
  out.d_emb = in.d_emb;
  return out;
}

template <class Real>
ForwardResult<Real> forward(const ModelInput<Real>& in, const ParamStore<Real>& p,
                            const ModelConfig& cfg, Tape<Real>* tape_ptr) {
  if (in.d_emb != cfg.d_emb || in.l_max != cfg.l_max) {
    throw Error("input dims (l_max " + std::to_string(in.l_max) + ", d_emb " +
                std::to_string(in.d_emb) + ") do not match model config");
  }
  if (in.true_len < 1 || in.true_len > in.l_max) throw Error("input true_len out of range");

  Tape<Real> local;
  Tape<Real>& tape = tape_ptr ? *tape_ptr : local;
  const int F = cfg.num_branches();
  const auto dh = static_cast<std::size_t>(cfg.d_h);
  tape.branches.resize(static_cast<std::size_t>(F));
  for (int f = 0; f < F; ++f) {
    forward_branch<Real>(cfg.branches[f], in, p, cfg, tape.branches[f]);
  }

  ForwardResult<Real> result;
  resize(tape.fused, dh);
  if (cfg.fusion == FusionKind::kAttention) {
    const auto W = value(p, kAttnProj);
    const auto w = value(p, kAttnVec);
    const auto da = static_cast<std::size_t>(cfg.d_a);
    resize(tape.proj, F * da);
    std::vector<Real> scores(static_cast<std::size_t>(F));
    for (int f = 0; f < F; ++f) {
      std::span<Real> proj(tape.proj.data() + f * da, da);
      linear_forward<Real>(tape.branches[f].h, 1, cfg.d_h, W, {}, cfg.d_a, proj);
      Real s{0};
      for (std::size_t a = 0; a < da; ++a) {
        proj[a] = std::tanh(proj[a]);
        s += w[a] * proj[a];
      }
      scores[f] = s;
    }
    resize(tape.alpha, static_cast<std::size_t>(F));
    softmax<Real>(scores, tape.alpha);
    for (int f = 0; f < F; ++f) {
      const auto& h = tape.branches[f].h;
      for (std::size_t i = 0; i < dh; ++i) tape.fused[i] += tape.alpha[f] * h[i];
    }
    result.attention = tape.alpha;
  } else {
    resize(tape.concat, F * dh);
    for (int f = 0; f < F; ++f) {
      std::copy(tape.branches[f].h.begin(), tape.branches[f].h.end(),
                tape.concat.begin() + f * dh);
    }
    resize(tape.fusion_hidden, static_cast<std::size_t>(cfg.d_mlp));
    linear_forward<Real>(tape.concat, 1, F * cfg.d_h, value(p, kFusionFc1W),
                         value(p, kFusionFc1B), cfg.d_mlp, tape.fusion_hidden);
    relu_inplace<Real>(tape.fusion_hidden);
    linear_forward<Real>(tape.fusion_hidden, 1, cfg.d_mlp, value(p, kFusionFc2W),
                         value(p, kFusionFc2B), cfg.d_h, tape.fused);
  }

  Real logit_out[1];
  linear_forward<Real>(tape.fused, 1, cfg.d_h, value(p, kHeadW), value(p, kHeadB), 1,
                       std::span<Real>(logit_out, 1));
  tape.logit = logit_out[0];
  tape.ready = true;
  result.logit = tape.logit;
  result.probability = sigmoid(tape.logit);
  return result;
}

template <class Real>
void backward(Tape<Real>& tape, Real dlogit, ParamStore<Real>& p, const ModelConfig& cfg) {
  if (!tape.ready) throw Error("backward called before forward");
  tape.ready = false;
  const int F = cfg.num_branches();
  const auto dh = static_cast<std::size_t>(cfg.d_h);

  resize(tape.d_fused, dh);
  Real dlogit_buf[1] = {dlogit};
  linear_backward<Real>(tape.fused, 1, cfg.d_h, value(p, kHeadW), 1,
                        std::span<const Real>(dlogit_buf, 1), grad(p, kHeadW), grad(p, kHeadB),
                        tape.d_fused);

  tape.d_h.resize(static_cast<std::size_t>(F));
  for (auto& v : tape.d_h) resize(v, dh);

  if (cfg.fusion == FusionKind::kAttention) {
    const auto W = value(p, kAttnProj);
    const auto w = value(p, kAttnVec);
    auto dW = grad(p, kAttnProj);
    auto dw = grad(p, kAttnVec);
    const auto da = static_cast<std::size_t>(cfg.d_a);

    // d alpha_f = d_fused . h_f, then through the softmax.
    std::vector<Real> dalpha(static_cast<std::size_t>(F));
    Real weighted{0};
    for (int f = 0; f < F; ++f) {
      const auto& h = tape.branches[f].h;
      Real s{0};
      for (std::size_t i = 0; i < dh; ++i) s += tape.d_fused[i] * h[i];
      dalpha[f] = s;
      weighted += tape.alpha[f] * s;
    }
    std::vector<Real> dz(da);
    for (int f = 0; f < F; ++f) {
      auto& dhf = tape.d_h[f];
      for (std::size_t i = 0; i < dh; ++i) dhf[i] += tape.alpha[f] * tape.d_fused[i];
      const Real dscore = tape.alpha[f] * (dalpha[f] - weighted);
      const Real* proj = tape.proj.data() + f * da;
      for (std::size_t a = 0; a < da; ++a) {
        dw[a] += dscore * proj[a];
        dz[a] = dscore * w[a] * (Real{1} - proj[a] * proj[a]);
      }
      linear_backward<Real>(tape.branches[f].h, 1, cfg.d_h, W, cfg.d_a, dz, dW, {}, dhf);
    }
  } else {
    resize(tape.d_hidden, static_cast<std::size_t>(cfg.d_mlp));
    linear_backward<Real>(tape.fusion_hidden, 1, cfg.d_mlp, value(p, kFusionFc2W), cfg.d_h,
                          tape.d_fused, grad(p, kFusionFc2W), grad(p, kFusionFc2B),
                          tape.d_hidden);
    relu_backward_inplace<Real>(tape.fusion_hidden, tape.d_hidden);
    resize(tape.d_concat, F * dh);
    linear_backward<Real>(tape.concat, 1, F * cfg.d_h, value(p, kFusionFc1W), cfg.d_mlp,
                          tape.d_hidden, grad(p, kFusionFc1W), grad(p, kFusionFc1B),
                          tape.d_concat);
    for (int f = 0; f < F; ++f) {
      std::copy(tape.d_concat.begin() + f * dh, tape.d_concat.begin() + (f + 1) * dh,
                tape.d_h[f].begin());
    }
  }

  for (int f = 0; f < F; ++f) {
    backward_branch<Real>(cfg.branches[f], p, cfg, tape.branches[f], tape.d_h[f], tape);
  }
}

double score_record(const FeatureRecord& record, const ParamStore<float>& params,
                    const ModelConfig& cfg) {
  return forward<float>(make_input(record, cfg), params, cfg).probability;
}

template ParamStore<float> init_params<float>(const ModelConfig&, Rng&);
template ParamStore<double> init_params<double>(const ModelConfig&, Rng&);
template ForwardResult<float> forward<float>(const ModelInput<float>&, const ParamStore<float>&,
                                             const ModelConfig&, Tape<float>*);
template ForwardResult<double> forward<double>(const ModelInput<double>&,
                                               const ParamStore<double>&, const ModelConfig&,
                                               Tape<double>*);
template void backward<float>(Tape<float>&, float, ParamStore<float>&, const ModelConfig&);
template void backward<double>(Tape<double>&, double, ParamStore<double>&, const ModelConfig&);

}  // namespace halunet
