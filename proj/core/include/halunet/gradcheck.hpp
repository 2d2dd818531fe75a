#pragma once

// Central finite-difference verification of the analytic backward pass.
// Everything runs at 64-bit. For parameter element i:
//   numeric  = (loss(theta + eps e_i) - loss(theta - eps e_i)) / (2 eps)
//   rel_err  = |analytic - numeric| / max(|analytic|, |numeric|, floor)
// Elements whose +/- eps perturbation flips any ReLU on/off are excluded
// (the loss is not differentiable across the kink) and counted separately.
//
// The plain central difference carries an O(eps^2 f''') truncation term
// which, at eps = 1e-3 and O(1) activations, can exceed 1e-4 relative on
// its own (e.g. through tanh in attention fusion). kRichardson combines
// the central differences at eps and eps/2, (4 D(eps/2) - D(eps)) / 3,
// cancelling that term.

#include <cstdint>
#include <string>
#include <vector>

#include "halunet/model.hpp"

namespace halunet {

enum class FiniteDifference { kCentral, kRichardson };

struct GradCheckOptions {
  double epsilon = 1e-3;
  FiniteDifference scheme = FiniteDifference::kRichardson;
  double denominator_floor = 1e-8;
};

struct TensorGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

struct GradCheckReport {
  std::string config_json;
  std::vector<TensorGradCheck> tensors;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

GradCheckReport check_gradients(const ModelConfig& cfg, ParamStore<double> params,
                                const InputBuffer64& input, int label,
                                const GradCheckOptions& opts = {});

/// Small random architecture; `index` cycles encoder presets, fusion kinds
/// and pooling mode so consecutive indices cover every variant.
ModelConfig random_small_config(Rng& rng, int index);

/// Random valid record for `cfg` (true_len drawn in [1, l_max]).
FeatureRecord random_record(const ModelConfig& cfg, Rng& rng, const std::string& id);

/// Builds random config/params/record from `seed` and checks them.
/// Random parameters (biases in +-0.2) and a random record for `cfg`.
GradCheckReport gradcheck_config(const ModelConfig& cfg, Rng& rng,
                                 const GradCheckOptions& opts = {});

GradCheckReport random_gradcheck(std::uint64_t seed, int index,
                                 const GradCheckOptions& opts = {});

}  // namespace halunet
