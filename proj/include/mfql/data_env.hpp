#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mfql/rng.hpp"
#include "mfql/tensor.hpp"

namespace mfql {

enum class ToyKind { Checkerboard4x4, EightGaussians };

struct ToyDistribution {
  ToyKind kind = ToyKind::Checkerboard4x4;
};

ToyKind parse_toy_kind(std::string_view name);

/// Checkerboard: uniform over the eight cells of the 4x4 grid on [-1,1]^2
/// whose (column + row) index parity is even. Eight Gaussians: equal-weight
/// mixture on a radius-0.8 ring, sigma 0.05, truncated at 3 sigma.
Tensor sample_toy(const ToyDistribution& dist, std::size_t n, Rng& rng);

/// Cell index (col, row) of a checkerboard point, each in 0..3.
std::array<int, 2> checkerboard_cell(double x, double y);
bool checkerboard_on(double x, double y);

using Vec2 = std::array<double, 2>;

/// Axis-aligned box.
struct Box {
  Vec2 lo;
  Vec2 hi;
  bool contains(const Vec2& p) const { return p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1]; }
};

/// 2-D point mass that must reach `goal` from `start` while routing around a box.
struct PointReachEnv {
  Vec2 start{-0.8, 0.0};
  Vec2 goal{0.8, 0.0};
  Box obstacle{{-0.2, -0.4}, {0.2, 0.4}};
  double step_scale = 0.1;
  double success_radius = 0.1;
  std::size_t horizon = 50;

  static constexpr std::size_t kStateDim = 2;
  static constexpr std::size_t kActionDim = 2;
};

struct StepResult {
  Vec2 next;
  double reward = -1.0;
  bool success = false;
};

/// Pure transition: clip the action to [-1,1]^2, move by step_scale, clamp to
/// [-1,1]^2, stay put if the move lands in the obstacle.
StepResult env_step(const PointReachEnv& env, const Vec2& s, const Vec2& a);

struct Transition {
  Vec2 s{};
  Vec2 a{};
  double r = -1.0;
  Vec2 s_next{};
  bool done = false;
};

struct OfflineDataset {
  std::vector<Transition> transitions;
  std::size_t state_dim = PointReachEnv::kStateDim;
  std::size_t action_dim = PointReachEnv::kActionDim;
  std::uint64_t source_seed = 0;
};

/// Route of a scripted expert around the obstacle.
enum class Route { Over, Under };

/// Noise-free expert action toward the route waypoint, then the goal.
Vec2 expert_action(const PointReachEnv& env, const Vec2& s, Route route);

struct BehaviorNoise {
  double sigma = 0.15;
  double random_prob = 0.1;
};

/// Expert action with Gaussian noise, replaced by a uniform random action with
/// probability `random_prob`; always inside [-1,1]^2.
Vec2 behavior_action(const PointReachEnv& env, const Vec2& s, Route route, const BehaviorNoise& noise, Rng& rng);

struct DatasetStats {
  std::size_t episodes = 0;
  std::size_t successes = 0;
};

/// Rolls out `n_episodes` of the 50/50 route mixture (route fixed per episode).
OfflineDataset gen_offline_dataset(const PointReachEnv& env, std::size_t n_episodes, Rng& rng,
                                   const BehaviorNoise& noise = {}, DatasetStats* stats = nullptr);

/// Lateral (second action component) split of the recorded actions taken
/// within `radius` of `probe`.
struct ProbeStats {
  std::size_t visits = 0;
  double up_fraction = 0.0;
  double down_fraction = 0.0;
};

ProbeStats probe_lateral_split(const OfflineDataset& ds, const Vec2& probe, double radius);

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

/// Batch views for training.
struct TransitionBatch {
  Tensor s;
  Tensor a;
  Tensor r;       // [B]
  Tensor s_next;
  Tensor done;    // [B], 0 or 1
};

TransitionBatch make_batch(const OfflineDataset& ds, std::span<const std::size_t> indices);
TransitionBatch sample_batch(const OfflineDataset& ds, std::size_t batch, Rng& rng);

/// Maps a batch of states [B, 2] to actions [B, 2].
using ActionFn = std::function<Tensor(const Tensor& states, Rng& rng)>;

/// Fraction of `episodes` rollouts from the start state that reach the goal.
/// The per-episode action function receives a single-row state.
double rollout_eval(const PointReachEnv& env, const ActionFn& act, std::size_t episodes, Rng& rng);

}  // namespace mfql
