#pragma once

// Synthetic feature datasets with a controllable amount of label signal.
//
// Per record: label ~ Bernoulli(hallucination_rate), length ~ U{3..l_max}.
// Per token, with s = separability and y = label:
//   entropy        ~ Exponential(mean 0.5 + 0.5 s y)
//   log-likelihood = -Exponential(mean 0.3 + 0.4 s y)
//   embedding      = prototype + sigma_y * N(0, I) + y s kappa (1 + 0.5 N(0,1)) u
// with sigma_0 = 0.5, sigma_1 = 0.5 (1 + 0.5 s), kappa = 0.5, and u a
// unit direction inside a fixed 2-D subspace. The prototype and subspace
// come from `world_seed`, so train and test sets drawn with different
// `seed`s describe the same "model". At s = 0 labels are independent of
// every feature.

#include <cstdint>

#include "halunet/feature_record.hpp"

namespace halunet {

struct SynthConfig {
  int n_records = 1000;
  int d_emb = 32;
  int l_max = kDefaultMaxLen;
  double separability = 1.0;
  double hallucination_rate = 0.5;
  std::uint64_t seed = 1;
  std::uint64_t world_seed = 0x48414C554E4554ULL;

  void validate() const;
};

Dataset generate(const SynthConfig& cfg);

}  // namespace halunet
