#include "mfql/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "mfql/errors.hpp"

namespace mfql {

namespace {

constexpr char kMagic[] = "MFQL1";
constexpr std::size_t kMagicSize = 5;
constexpr std::uint64_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
  return v;
}

Tensor meta_vector(const std::vector<std::size_t>& values) {
  std::vector<double> data(values.begin(), values.end());
  return Tensor::vector(std::move(data));
}

const Tensor& find(const std::map<std::string, const Tensor*>& index, const std::string& name) {
  const auto it = index.find(name);
  if (it == index.end()) throw IoError("checkpoint lacks tensor '" + name + "'");
  return *it->second;
}

std::vector<std::size_t> meta_values(const Tensor& t) {
  std::vector<std::size_t> out;
  for (double v : t.values()) {
    if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) throw IoError("bad checkpoint metadata");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void copy_params(MlpParams& dst, const std::string& prefix, const std::map<std::string, const Tensor*>& index) {
  const std::vector<std::string> names = dst.tensor_names();
  std::vector<Tensor*> tensors = dst.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Tensor& src = find(index, prefix + names[i]);
    if (!src.same_shape(*tensors[i])) {
      throw IoError("checkpoint tensor '" + prefix + names[i] + "' has shape " + shape_string(src.shape()) +
                    ", expected " + shape_string(tensors[i]->shape()));
    }
    *tensors[i] = src;
  }
}

void append_params(std::vector<NamedTensor>& out, const MlpParams& params, const std::string& prefix) {
  const std::vector<std::string> names = params.tensor_names();
  const std::vector<const Tensor*> tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) out.push_back({prefix + names[i], *tensors[i]});
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, kMagicSize);
  for (const NamedTensor& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * 8));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[kMagicSize];
  if (!in.read(magic, kMagicSize) || std::memcmp(magic, kMagic, kMagicSize) != 0) {
    throw IoError("not an MFQL1 checkpoint: " + path.string());
  }
  std::vector<NamedTensor> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("truncated checkpoint " + path.string());
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > kMaxRank) throw IoError("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    std::size_t count = 1;
    for (std::size_t& d : shape) {
      d = get<std::uint64_t>(in, path);
      count *= d;
    }
    std::vector<double> data(count);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 8))) {
      throw IoError("truncated checkpoint " + path.string());
    }
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

std::vector<NamedTensor> model_tensors(const PolicyNet& policy, const CriticEnsemble& critic) {
  std::vector<NamedTensor> out;
  std::vector<std::size_t> pmeta = {policy.state_dim, policy.action_dim, policy.time_embed_dim,
                                    static_cast<std::size_t>(policy.variant)};
  const auto& psizes = policy.mlp.spec.layer_sizes;
  pmeta.insert(pmeta.end(), psizes.begin() + 1, psizes.end() - 1);
  out.push_back({"meta/policy", meta_vector(pmeta)});

  if (critic.members.empty()) throw ConfigError("cannot checkpoint an empty critic ensemble");
  const MlpSpec& cspec = critic.members.front().spec;
  std::vector<std::size_t> cmeta = {critic.state_dim, critic.action_dim, cspec.use_layer_norm ? 1u : 0u,
                                    critic.members.size()};
  cmeta.insert(cmeta.end(), cspec.layer_sizes.begin() + 1, cspec.layer_sizes.end() - 1);
  out.push_back({"meta/critic", meta_vector(cmeta)});

  append_params(out, policy.mlp, "policy/");
  for (std::size_t m = 0; m < critic.members.size(); ++m) {
    append_params(out, critic.members[m], "critic" + std::to_string(m) + "/");
  }
  return out;
}

LoadedModel model_from_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> index;
  for (const NamedTensor& t : tensors) index[t.name] = &t.value;

  const std::vector<std::size_t> pmeta = meta_values(find(index, "meta/policy"));
  const std::vector<std::size_t> cmeta = meta_values(find(index, "meta/critic"));
  if (pmeta.size() < 4 || cmeta.size() < 4) throw IoError("bad checkpoint metadata");
  if (pmeta[3] >= kAllVariants.size()) throw IoError("checkpoint names an unknown variant");

  PolicyConfig pc;
  pc.state_dim = pmeta[0];
  pc.action_dim = pmeta[1];
  pc.time_embed_dim = pmeta[2];
  pc.variant = static_cast<VariantId>(pmeta[3]);
  pc.hidden.assign(pmeta.begin() + 4, pmeta.end());
  CriticConfig cc;
  cc.state_dim = cmeta[0];
  cc.action_dim = cmeta[1];
  cc.layer_norm = cmeta[2] != 0;
  cc.ensemble_size = cmeta[3];
  cc.hidden.assign(cmeta.begin() + 4, cmeta.end());

  LoadedModel model{make_policy(pc, 0), make_critic(cc, 0)};
  copy_params(model.policy.mlp, "policy/", index);
  for (std::size_t m = 0; m < model.critic.members.size(); ++m) {
    copy_params(model.critic.members[m], "critic" + std::to_string(m) + "/", index);
  }
  return model;
}

void save_model(const std::filesystem::path& path, const PolicyNet& policy, const CriticEnsemble& critic) {
  save_tensors(path, model_tensors(policy, critic));
}

LoadedModel load_model(const std::filesystem::path& path) { return model_from_tensors(load_tensors(path)); }

}  // namespace mfql
