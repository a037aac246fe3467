#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mfql/nets.hpp"
#include "mfql/tensor.hpp"

namespace mfql {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Binary layout: "MFQL1", then per tensor u32 name length, name bytes,
/// u32 rank, u64 dims, f64 payload; all little-endian.
void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// Policy and critic parameters plus the metadata needed to rebuild them.
std::vector<NamedTensor> model_tensors(const PolicyNet& policy, const CriticEnsemble& critic);

struct LoadedModel {
  PolicyNet policy;
  CriticEnsemble critic;
};

LoadedModel model_from_tensors(const std::vector<NamedTensor>& tensors);

void save_model(const std::filesystem::path& path, const PolicyNet& policy, const CriticEnsemble& critic);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace mfql
