#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "mfql/data_env.hpp"
#include "mfql/errors.hpp"

using namespace mfql;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

int parse_error_line(const std::filesystem::path& p) {
  try {
    load_dataset(p);
  } catch (const ParseError& e) {
    return static_cast<int>(e.line());
  }
  return -1;
}

}  // namespace

TEST_CASE("checkerboard: support on even-parity cells, uniform cell frequencies") {
  Rng rng(1);
  const std::size_t n = 100000;
  const Tensor x = sample_toy({ToyKind::Checkerboard4x4}, n, rng);
  std::map<int, int> counts;
  for (std::size_t i = 0; i < n; ++i) {
    const int cx = static_cast<int>(std::floor(2.0 * (x(i, 0) + 1.0)));
    const int cy = static_cast<int>(std::floor(2.0 * (x(i, 1) + 1.0)));
    REQUIRE(cx >= 0);
    REQUIRE(cx <= 3);
    REQUIRE(cy >= 0);
    REQUIRE(cy <= 3);
    CHECK((cx + cy) % 2 == 0);
    CHECK(checkerboard_on(x(i, 0), x(i, 1)));
    counts[cx * 4 + cy]++;
  }
  CHECK(counts.size() == 8);
  const double p = 1.0 / 8.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (const auto& [cell, c] : counts) CHECK(std::abs(c - n * p) <= 3.0 * sigma);
}

TEST_CASE("eight gaussians: component means and truncation") {
  Rng rng(2);
  const std::size_t n = 40000;
  const Tensor x = sample_toy({ToyKind::EightGaussians}, n, rng);
  std::vector<double> sx(8, 0.0), sy(8, 0.0);
  std::vector<int> cnt(8, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_d = 1e9;
    for (int k = 0; k < 8; ++k) {
      const double d = std::hypot(x(i, 0) - 0.8 * std::cos(k * M_PI / 4), x(i, 1) - 0.8 * std::sin(k * M_PI / 4));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    CHECK(best_d <= 3.0 * 0.05 * std::sqrt(2.0) + 1e-12);
    CHECK(std::abs(x(i, 0)) <= 1.05);
    CHECK(std::abs(x(i, 1)) <= 1.05);
    sx[best] += x(i, 0);
    sy[best] += x(i, 1);
    cnt[best]++;
  }
  for (int k = 0; k < 8; ++k) {
    REQUIRE(cnt[k] > 0);
    // Truncated normal std is slightly below 0.05, so 0.05 gives a conservative bound.
    const double tol = 3.0 * 0.05 / std::sqrt(cnt[k]);
    CHECK(std::abs(sx[k] / cnt[k] - 0.8 * std::cos(k * M_PI / 4)) <= tol);
    CHECK(std::abs(sy[k] / cnt[k] - 0.8 * std::sin(k * M_PI / 4)) <= tol);
  }
  CHECK_THROWS_AS(sample_toy({ToyKind::EightGaussians}, 0, rng), ConfigError);
  CHECK(parse_toy_kind("eight_gaussians") == ToyKind::EightGaussians);
  CHECK_THROWS_AS(parse_toy_kind("moons"), ConfigError);
}

TEST_CASE("env_step: idle, clipping, clamping, obstacle and success") {
  const PointReachEnv env;
  const StepResult idle = env_step(env, {-0.5, 0.5}, {0.0, 0.0});
  CHECK(idle.next == Vec2{-0.5, 0.5});
  CHECK(idle.reward == -1.0);
  CHECK_FALSE(idle.success);

  const StepResult clipped = env_step(env, {-0.5, 0.5}, {5.0, -5.0});
  CHECK(clipped.next[0] == doctest::Approx(-0.4));
  CHECK(clipped.next[1] == doctest::Approx(0.4 + 0.0).epsilon(1e-12));

  const StepResult wall = env_step(env, {0.95, 0.95}, {1.0, 1.0});
  CHECK(wall.next == Vec2{1.0, 1.0});

  const StepResult blocked = env_step(env, {-0.25, 0.0}, {1.0, 0.0});
  CHECK(blocked.next == Vec2{-0.25, 0.0});

  const StepResult goal = env_step(env, {0.65, 0.0}, {1.0, 0.0});
  CHECK(goal.success);
  CHECK(goal.reward == 0.0);

  CHECK(env_step(env, {0.3, 0.7}, {0.2, -0.4}).next == env_step(env, {0.3, 0.7}, {0.2, -0.4}).next);
}

TEST_CASE("offline dataset: action range, reward/done consistency, expert success") {
  const PointReachEnv env;
  Rng rng(3);
  DatasetStats stats;
  const OfflineDataset ds = gen_offline_dataset(env, 500, rng, {}, &stats);
  CHECK(stats.episodes == 500);
  CHECK(static_cast<double>(stats.successes) / 500.0 >= 0.6);
  std::size_t steps_in_episode = 0;
  for (const Transition& t : ds.transitions) {
    ++steps_in_episode;
    CHECK(std::abs(t.a[0]) <= 1.0);
    CHECK(std::abs(t.a[1]) <= 1.0);
    const bool at_goal = std::hypot(t.s_next[0] - env.goal[0], t.s_next[1] - env.goal[1]) < env.success_radius;
    CHECK(t.r == (at_goal ? 0.0 : -1.0));
    if (t.done) {
      CHECK((at_goal || steps_in_episode == env.horizon));
      steps_in_episode = 0;
    } else {
      CHECK_FALSE(at_goal);
    }
  }
  Rng again(3);
  CHECK(gen_offline_dataset(env, 500, again).transitions.size() == ds.transitions.size());
  CHECK_THROWS_AS(gen_offline_dataset(env, 0, rng), ConfigError);
}

TEST_CASE("offline dataset: bimodal actions at the start state") {
  const PointReachEnv env;
  Rng rng(4);
  const OfflineDataset ds = gen_offline_dataset(env, 500, rng);
  const ProbeStats probe = probe_lateral_split(ds, env.start, 1e-9);
  CHECK(probe.visits == 500);
  CHECK(probe.up_fraction >= 0.25);
  CHECK(probe.down_fraction >= 0.25);
}

TEST_CASE("rollout_eval: expert, random baseline, noise") {
  const PointReachEnv env;
  Rng rng(5);
  const ActionFn expert = [&](const Tensor& s, Rng&) {
    Tensor a({s.rows(), 2});
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const Vec2 act = expert_action(env, {s(i, 0), s(i, 1)}, i % 2 == 0 ? Route::Over : Route::Under);
      a(i, 0) = act[0];
      a(i, 1) = act[1];
    }
    return a;
  };
  CHECK(rollout_eval(env, expert, 100, rng) >= 0.95);

  const ActionFn uniform = [](const Tensor& s, Rng& r) {
    Tensor a({s.rows(), 2});
    for (double& v : a.values()) v = r.uniform(-1.0, 1.0);
    return a;
  };
  // Measured random baseline: 0 successes out of 1000.
  CHECK(rollout_eval(env, uniform, 1000, rng) <= 0.01);

  const ActionFn gaussian = [](const Tensor& s, Rng& r) {
    Tensor a({s.rows(), 2});
    for (double& v : a.values()) v = r.normal();
    return a;
  };
  CHECK(rollout_eval(env, gaussian, 500, rng) <= 0.01 + 0.1);
  CHECK_THROWS_AS(rollout_eval(env, uniform, 0, rng), ConfigError);
}

TEST_CASE("dataset file: round trip and parse errors") {
  const PointReachEnv env;
  Rng rng(6);
  const OfflineDataset ds = gen_offline_dataset(env, 20, rng);
  const auto path = temp_file("mfql_test_ds.csv");
  save_dataset(ds, path);
  const OfflineDataset back = load_dataset(path);
  REQUIRE(back.transitions.size() == ds.transitions.size());
  for (std::size_t i = 0; i < ds.transitions.size(); ++i) {
    const Transition& a = ds.transitions[i];
    const Transition& b = back.transitions[i];
    CHECK(a.s == b.s);
    CHECK(a.a == b.a);
    CHECK(a.r == b.r);
    CHECK(a.s_next == b.s_next);
    CHECK(a.done == b.done);
  }

  write_text(path, "");
  CHECK(parse_error_line(path) == 1);
  try {
    load_dataset(path);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("missing header") != std::string::npos);
  }
  write_text(path, "# mfql-dataset v1 state_dim=2 action_dim=2\n0,0,0,0,-1,0,0,0\n0,0,0,0,-1,0,0\n");
  CHECK(parse_error_line(path) == 3);
  write_text(path, "# mfql-dataset v1 state_dim=2 action_dim=2\n0,0,x,0,-1,0,0,0\n");
  CHECK(parse_error_line(path) == 2);
  write_text(path, "# mfql-dataset v1 state_dim=3 action_dim=2\n0,0,0,0,-1,0,0,0\n");
  CHECK(parse_error_line(path) == 1);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_dataset(path), IoError);
}

TEST_CASE("batches gather the requested transitions") {
  const PointReachEnv env;
  Rng rng(7);
  const OfflineDataset ds = gen_offline_dataset(env, 3, rng);
  const std::vector<std::size_t> idx = {2, 0};
  const TransitionBatch b = make_batch(ds, idx);
  CHECK(b.s(0, 1) == ds.transitions[2].s[1]);
  CHECK(b.a(1, 0) == ds.transitions[0].a[0]);
  CHECK(b.r[0] == ds.transitions[2].r);
  CHECK(sample_batch(ds, 16, rng).s.rows() == 16);
  CHECK_THROWS_AS(sample_batch(OfflineDataset{}, 4, rng), DataError);
}
