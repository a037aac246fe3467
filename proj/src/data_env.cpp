#include "mfql/data_env.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "mfql/errors.hpp"

namespace mfql {

namespace {

constexpr double kRingRadius = 0.8;
constexpr double kRingSigma = 0.05;

double clip1(double x) { return std::clamp(x, -1.0, 1.0); }

double distance(const Vec2& a, const Vec2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_value(std::string_view field, std::size_t line) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("bad number '" + std::string(field) + "'", line);
  return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(',', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

ToyKind parse_toy_kind(std::string_view name) {
  if (name == "checkerboard") return ToyKind::Checkerboard4x4;
  if (name == "eight_gaussians") return ToyKind::EightGaussians;
  throw ConfigError("unknown toy distribution '" + std::string(name) + "' (expected checkerboard, eight_gaussians)");
}

std::array<int, 2> checkerboard_cell(double x, double y) {
  auto cell = [](double v) { return std::clamp(static_cast<int>(std::floor(2.0 * (v + 1.0))), 0, 3); };
  return {cell(x), cell(y)};
}

bool checkerboard_on(double x, double y) {
  const auto [cx, cy] = checkerboard_cell(x, y);
  return (cx + cy) % 2 == 0;
}

Tensor sample_toy(const ToyDistribution& dist, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("sample_toy needs n >= 1");
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    if (dist.kind == ToyKind::Checkerboard4x4) {
      // The 8 "on" cells: for each row, the two columns with matching parity.
      const std::size_t cell = rng.index(8);
      const int row = static_cast<int>(cell / 2);
      const int col = 2 * static_cast<int>(cell % 2) + (row % 2);
      out(i, 0) = -1.0 + 0.5 * (col + rng.uniform());
      out(i, 1) = -1.0 + 0.5 * (row + rng.uniform());
    } else {
      const double angle = static_cast<double>(rng.index(8)) * M_PI / 4.0;
      for (std::size_t d = 0; d < 2; ++d) {
        double z = rng.normal();
        while (std::abs(z) > 3.0) z = rng.normal();
        out(i, d) = kRingRadius * (d == 0 ? std::cos(angle) : std::sin(angle)) + kRingSigma * z;
      }
    }
  }
  return out;
}

StepResult env_step(const PointReachEnv& env, const Vec2& s, const Vec2& a) {
  Vec2 next{clip1(s[0] + env.step_scale * clip1(a[0])), clip1(s[1] + env.step_scale * clip1(a[1]))};
  if (env.obstacle.contains(next)) next = s;
  StepResult out;
  out.next = next;
  out.success = distance(next, env.goal) < env.success_radius;
  out.reward = out.success ? 0.0 : -1.0;
  return out;
}

Vec2 expert_action(const PointReachEnv& env, const Vec2& s, Route route) {
  const double side = route == Route::Over ? 1.0 : -1.0;
  const double margin = 0.05;
  const double lane = env.obstacle.hi[1] + 0.2;  // cruising height beside the box
  const double left = env.obstacle.lo[0] - margin;
  const double right = env.obstacle.hi[0] + margin;
  Vec2 target = env.goal;
  if (s[0] < left) {
    target = std::abs(s[1]) < lane - 0.05 ? Vec2{left, side * lane}
                                          : Vec2{right + 0.05, std::copysign(lane, s[1])};
  } else if (s[0] <= right) {
    // Beside or above the box: climb to the lane on the current side, then cross.
    const double y_side = s[1] == 0.0 ? side : std::copysign(1.0, s[1]);
    target = std::abs(s[1]) < env.obstacle.hi[1] + 0.1 ? Vec2{s[0], y_side * lane}
                                                        : Vec2{right + 0.05, y_side * lane};
  }
  return {clip1((target[0] - s[0]) / env.step_scale), clip1((target[1] - s[1]) / env.step_scale)};
}

Vec2 behavior_action(const PointReachEnv& env, const Vec2& s, Route route, const BehaviorNoise& noise, Rng& rng) {
  if (rng.uniform() < noise.random_prob) return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  const Vec2 a = expert_action(env, s, route);
  const double n0 = noise.sigma * rng.normal();
  const double n1 = noise.sigma * rng.normal();
  return {clip1(a[0] + n0), clip1(a[1] + n1)};
}

OfflineDataset gen_offline_dataset(const PointReachEnv& env, std::size_t n_episodes, Rng& rng,
                                   const BehaviorNoise& noise, DatasetStats* stats) {
  if (n_episodes == 0) throw ConfigError("gen_offline_dataset needs at least one episode");
  OfflineDataset ds;
  DatasetStats local;
  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    const Route route = rng.uniform() < 0.5 ? Route::Over : Route::Under;
    Vec2 s = env.start;
    bool success = false;
    for (std::size_t step = 0; step < env.horizon; ++step) {
      const Vec2 a = behavior_action(env, s, route, noise, rng);
      const StepResult res = env_step(env, s, a);
      const bool done = res.success || step + 1 == env.horizon;
      ds.transitions.push_back({s, a, res.reward, res.next, done});
      s = res.next;
      if (res.success) {
        success = true;
        break;
      }
    }
    local.episodes += 1;
    local.successes += success ? 1 : 0;
  }
  if (stats != nullptr) *stats = local;
  return ds;
}

ProbeStats probe_lateral_split(const OfflineDataset& ds, const Vec2& probe, double radius) {
  ProbeStats out;
  std::size_t up = 0;
  std::size_t down = 0;
  for (const Transition& t : ds.transitions) {
    if (distance(t.s, probe) > radius) continue;
    ++out.visits;
    if (t.a[1] > 0.0) ++up;
    if (t.a[1] < 0.0) ++down;
  }
  if (out.visits > 0) {
    out.up_fraction = static_cast<double>(up) / static_cast<double>(out.visits);
    out.down_fraction = static_cast<double>(down) / static_cast<double>(out.visits);
  }
  return out;
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# mfql-dataset v1 state_dim=" << ds.state_dim << " action_dim=" << ds.action_dim << '\n';
  for (const Transition& t : ds.transitions) {
    out << format_value(t.s[0]) << ',' << format_value(t.s[1]) << ',' << format_value(t.a[0]) << ','
        << format_value(t.a[1]) << ',' << format_value(t.r) << ',' << format_value(t.s_next[0]) << ','
        << format_value(t.s_next[1]) << ',' << (t.done ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  unsigned long state_dim = 0;
  unsigned long action_dim = 0;
  if (std::sscanf(line.c_str(), "# mfql-dataset v1 state_dim=%lu action_dim=%lu", &state_dim, &action_dim) != 2) {
    throw ParseError("missing header", 1);
  }
  if (state_dim != PointReachEnv::kStateDim || action_dim != PointReachEnv::kActionDim) {
    throw ParseError("unsupported dims state_dim=" + std::to_string(state_dim) +
                         " action_dim=" + std::to_string(action_dim),
                     1);
  }
  const std::size_t width = 2 * state_dim + action_dim + 2;
  OfflineDataset ds;
  ds.state_dim = state_dim;
  ds.action_dim = action_dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()), line_no);
    }
    Transition t;
    t.s = {parse_value(fields[0], line_no), parse_value(fields[1], line_no)};
    t.a = {parse_value(fields[2], line_no), parse_value(fields[3], line_no)};
    t.r = parse_value(fields[4], line_no);
    t.s_next = {parse_value(fields[5], line_no), parse_value(fields[6], line_no)};
    const double done = parse_value(fields[7], line_no);
    if (done != 0.0 && done != 1.0) throw ParseError("done flag must be 0 or 1", line_no);
    t.done = done == 1.0;
    ds.transitions.push_back(t);
  }
  if (ds.transitions.empty()) throw ParseError("dataset has no transitions", line_no);
  return ds;
}

TransitionBatch make_batch(const OfflineDataset& ds, std::span<const std::size_t> indices) {
  const std::size_t n = indices.size();
  TransitionBatch b{Tensor({n, ds.state_dim}), Tensor({n, ds.action_dim}), Tensor({n}), Tensor({n, ds.state_dim}),
                    Tensor({n})};
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = ds.transitions.at(indices[i]);
    for (std::size_t d = 0; d < 2; ++d) {
      b.s(i, d) = t.s[d];
      b.a(i, d) = t.a[d];
      b.s_next(i, d) = t.s_next[d];
    }
    b.r[i] = t.r;
    b.done[i] = t.done ? 1.0 : 0.0;
  }
  return b;
}

TransitionBatch sample_batch(const OfflineDataset& ds, std::size_t batch, Rng& rng) {
  if (ds.transitions.empty()) throw DataError("cannot sample from an empty dataset");
  std::vector<std::size_t> idx(batch);
  for (std::size_t& i : idx) i = rng.index(ds.transitions.size());
  return make_batch(ds, idx);
}

double rollout_eval(const PointReachEnv& env, const ActionFn& act, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw ConfigError("rollout_eval needs at least one episode");
  std::vector<Vec2> states(episodes, env.start);
  std::vector<bool> active(episodes, true);
  std::size_t successes = 0;
  for (std::size_t step = 0; step < env.horizon; ++step) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < episodes; ++i) {
      if (active[i]) live.push_back(i);
    }
    if (live.empty()) break;
    Tensor s({live.size(), 2});
    for (std::size_t k = 0; k < live.size(); ++k) {
      s(k, 0) = states[live[k]][0];
      s(k, 1) = states[live[k]][1];
    }
    const Tensor a = act(s, rng);
    require_matrix(a, 2, "rollout action");
    for (std::size_t k = 0; k < live.size(); ++k) {
      const std::size_t i = live[k];
      const StepResult res = env_step(env, states[i], {a(k, 0), a(k, 1)});
      states[i] = res.next;
      if (res.success) {
        active[i] = false;
        ++successes;
      }
    }
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

}  // namespace mfql
