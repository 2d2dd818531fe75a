#pragma once

// Token-level feature records and the HFJ v1 interchange format.
//
// A record holds three per-token signals for one generated answer:
// log-likelihood of the emitted token, entropy of the next-token
// distribution, and a hidden-state embedding. Sequences are stored
// zero-padded to `l_max`; only the first `true_len` positions carry data.
//
// HFJ v1 layout (one JSON object per line):
//   {"format":"hfj","version":1,"l_max":50,"d_emb":32}
//   {"id":"q1","context_present":true,"true_len":3,"label":1,
//    "ll":[...3],"ent":[...3],"emb":[[...32],[...32],[...32]]}
// Only the true_len prefix is written; padding is rebuilt on load.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace halunet {

inline constexpr int kDefaultMaxLen = 50;
inline constexpr int kHfjVersion = 1;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureRecord {
  std::string id;
  bool context_present = false;
  int true_len = 0;
  int label = 0;  // 1 = hallucinated
  std::vector<float> log_likelihoods;  // l_max
  std::vector<float> entropies;        // l_max
  std::vector<float> embeddings;       // l_max x d_emb, row-major

  std::span<const float> embedding_row(int t, int d_emb) const {
    return std::span<const float>(embeddings).subspan(
        static_cast<std::size_t>(t) * d_emb, static_cast<std::size_t>(d_emb));
  }

  bool operator==(const FeatureRecord&) const = default;
};

struct Dataset {
  int l_max = kDefaultMaxLen;
  int d_emb = 0;
  std::vector<FeatureRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  bool operator==(const Dataset&) const = default;
};

/// Checks every FeatureRecord invariant; throws Error naming the record id.
void validate_record(const FeatureRecord& record, int l_max, int d_emb);

/// Validates all records plus dataset-level invariants (shared dims, unique ids).
void validate_dataset(const Dataset& dataset);

Dataset read_dataset(std::istream& in);
void write_dataset(const Dataset& dataset, std::ostream& out);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct PaddedSequence {
  std::vector<float> log_likelihoods;
  std::vector<float> entropies;
  std::vector<float> embeddings;
  int true_len = 0;
};

/// Zero-pads sequences shorter than l_max; keeps the first l_max tokens of
/// longer ones. `embeddings` is n x d_emb row-major.
PaddedSequence truncate_or_pad(std::span<const float> log_likelihoods,
                               std::span<const float> entropies,
                               std::span<const float> embeddings, int d_emb,
                               int l_max);

/// Builds and validates a record from unpadded per-token signals.
FeatureRecord make_record(std::string id, bool context_present, int label,
                          std::span<const float> log_likelihoods,
                          std::span<const float> entropies,
                          std::span<const float> embeddings, int d_emb,
                          int l_max = kDefaultMaxLen);

}  // namespace halunet
