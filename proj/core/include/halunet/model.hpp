#pragma once

// Multi-branch hallucination detector.
//
//   branch f (ll | ent | emb) -> h_f in R^{d_h}
//     mlp_pool: masked mean over tokens -> Linear(c_in, d_mlp) -> ReLU -> Linear(d_mlp, d_h)
//     cnn:      Conv3(c_in, d_conv) -> ReLU -> Conv3(d_conv, d_conv) -> ReLU -> masked mean
//   fusion
//     attention:  a_f = w . tanh(W_a h_f); alpha = softmax(a); h = sum_f alpha_f h_f
//     concat_mlp: h = Linear(d_mlp, d_h)(ReLU(Linear(F*d_h, d_mlp)([h_1; ...; h_F])))
//   head: logit = w_o . h + b_o, p = sigmoid(logit)
//
// With pooling_masked the network only reads the first true_len positions
// (the conv stack runs on the true-length sequence with its own zero
// padding), so padded values cannot influence the output.

#include <optional>
#include <string>
#include <vector>

#include "halunet/feature_record.hpp"
#include "halunet/rng.hpp"
#include "halunet/tensor.hpp"

namespace halunet {

enum class Feature { kLogLikelihood, kEntropy, kEmbedding };
enum class EncoderKind { kMlpPool, kCnn };
enum class FusionKind { kAttention, kConcatMlp };
enum class EncoderPreset { kAllCnn, kMixed, kAllMlp };

std::string to_string(Feature f);        // "ll" | "ent" | "emb"
std::string to_string(EncoderKind e);    // "mlp_pool" | "cnn"
std::string to_string(FusionKind f);     // "attention" | "concat_mlp"
std::string to_string(EncoderPreset p);  // "all-cnn" | "mixed" | "all-mlp"
Feature parse_feature(const std::string& s);
EncoderKind parse_encoder(const std::string& s);
FusionKind parse_fusion(const std::string& s);
EncoderPreset parse_preset(const std::string& s);

/// Parses a comma list such as "ll,ent,emb".
std::vector<Feature> parse_feature_list(const std::string& s);

struct BranchSpec {
  Feature feature = Feature::kLogLikelihood;
  EncoderKind encoder = EncoderKind::kCnn;
  bool operator==(const BranchSpec&) const = default;
};

struct ModelConfig {
  std::vector<BranchSpec> branches = {{Feature::kLogLikelihood, EncoderKind::kCnn},
                                      {Feature::kEntropy, EncoderKind::kCnn},
                                      {Feature::kEmbedding, EncoderKind::kCnn}};
  FusionKind fusion = FusionKind::kConcatMlp;
  int d_emb = 32;
  int l_max = kDefaultMaxLen;
  int d_conv = 64;
  int d_h = 64;
  int d_mlp = 64;
  int d_a = 64;
  bool pooling_masked = true;

  /// Branch encoders from a preset: all-CNN, mixed (scalars mlp_pool, emb
  /// cnn) or all-MLP.
  static ModelConfig from_preset(EncoderPreset preset, const std::vector<Feature>& features,
                                 FusionKind fusion, int d_emb);

  int num_branches() const { return static_cast<int>(branches.size()); }
  int input_channels(Feature f) const { return f == Feature::kEmbedding ? d_emb : 1; }

  /// Throws Error when dims are non-positive, features repeat or are empty,
  /// or a cnn branch has d_conv != d_h.
  void validate() const;

  std::string to_json() const;
  /// Overlays the fields present in `text` onto `base`. Besides the
  /// to_json() keys, accepts "features" (list or comma string) and
  /// "encoder" (preset name) shorthands.
  static ModelConfig from_json(const std::string& text, const ModelConfig& base);
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

enum class InitKind { kKaiming, kXavier, kZero };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kZero;
  int fan_in = 0;
  int fan_out = 0;
};

/// Parameter names, shapes and init rules in canonical order.
std::vector<ParamSpec> parameter_manifest(const ModelConfig& cfg);

/// Kaiming-uniform for conv and hidden linear layers, Xavier-uniform for the
/// attention projection/vector and the logit layer, zero biases.
template <class Real>
ParamStore<Real> init_params(const ModelConfig& cfg, Rng& rng);

/// Read-only view of one record's padded signals.
template <class Real>
struct ModelInput {
  std::span<const Real> log_likelihoods;  // l_max
  std::span<const Real> entropies;        // l_max
  std::span<const Real> embeddings;       // l_max x d_emb
  int true_len = 0;
  int l_max = 0;
  int d_emb = 0;
};

ModelInput<float> make_input(const FeatureRecord& record, const ModelConfig& cfg);

/// Owned double-precision copy of a record (gradient checking).
struct InputBuffer64 {
  std::vector<double> log_likelihoods, entropies, embeddings;
  int true_len = 0, l_max = 0, d_emb = 0;
  ModelInput<double> view() const {
    return {log_likelihoods, entropies, embeddings, true_len, l_max, d_emb};
  }
};
InputBuffer64 make_input64(const FeatureRecord& record, const ModelConfig& cfg);

template <class Real>
struct ForwardResult {
  Real logit{};
  Real probability{};
  std::optional<std::vector<Real>> attention;  // present for attention fusion
};

/// Activations cached by forward() for backward(). Reusable across calls.
template <class Real>
struct Tape {
  struct Branch {
    int len = 0;
    std::vector<Real> pooled, hidden;          // mlp_pool
    std::vector<Real> col1, act1, col2, act2;  // cnn
    std::vector<Real> h;
  };
  std::vector<Branch> branches;
  std::vector<Real> proj;     // attention: tanh(W_a h_f), F x d_a
  std::vector<Real> alpha;    // attention weights
  std::vector<Real> concat;   // concat_mlp input, F*d_h
  std::vector<Real> fusion_hidden;
  std::vector<Real> fused;
  Real logit{};
  bool ready = false;

  // backward scratch
  std::vector<Real> d_act1, d_act2, d_col, d_hidden, d_fused, d_concat;
  std::vector<std::vector<Real>> d_h;
};

template <class Real>
ForwardResult<Real> forward(const ModelInput<Real>& input, const ParamStore<Real>& params,
                            const ModelConfig& cfg, Tape<Real>* tape = nullptr);

/// Accumulates d(loss)/d(param) into params' grad buffers given
/// dlogit = d(loss)/d(logit). Consumes the tape; throws if no forward pass
/// was recorded.
template <class Real>
void backward(Tape<Real>& tape, Real dlogit, ParamStore<Real>& params, const ModelConfig& cfg);

/// Hallucination decision: 1 iff p >= 0.5.
inline int predict(double p) { return p >= 0.5 ? 1 : 0; }

/// Convenience: probability for one record with float params.
double score_record(const FeatureRecord& record, const ParamStore<float>& params,
                    const ModelConfig& cfg);

}  // namespace halunet
