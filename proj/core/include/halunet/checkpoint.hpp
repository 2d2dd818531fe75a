#pragma once

// Checkpoint layout:
//   line 1: JSON header
//     {"format":"halunet-checkpoint","version":1,"config":{...ModelConfig...},
//      "tensors":[{"name":"ll.conv1.weight","shape":[64,1,3]}, ...],
//      "blob_bytes":N}
//   then exactly N bytes: every tensor's values as little-endian IEEE-754
//   binary32, concatenated in manifest order.
// Optimizer state is not stored.

#include <filesystem>
#include <iosfwd>

#include "halunet/model.hpp"

namespace halunet {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParamStore<float> params;
};

void write_checkpoint(const ParamStore<float>& params, const ModelConfig& cfg, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const ParamStore<float>& params, const ModelConfig& cfg,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace halunet
