#include "mfql/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mfql/checkpoint.hpp"
#include "mfql/errors.hpp"

namespace mfql {

namespace {

const std::set<std::string> kToyKeys = {"variant",   "dist",      "steps",     "batch",          "lr",
                                        "grad_clip", "hidden",    "time_embed_dim", "sampler",   "time_steps",
                                        "loss_p",    "loss_c",    "seed",      "w2_samples",     "dump_steps",
                                        "log_interval", "out_dir"};

const std::set<std::string> kRlKeys = {
    "dataset",       "dataset_episodes", "dataset_seed",   "variant",       "alpha0",        "adaptive_alpha",
    "k",             "gamma",            "tau",            "batch",         "actor_lr",      "critic_lr",
    "grad_clip",     "sampler",          "time_steps",     "loss_p",        "loss_c",        "total_steps",
    "log_interval",  "eval_interval",    "eval_episodes",  "eval_seed",     "alpha_interval", "alpha_window",
    "actor_hidden",  "critic_hidden",    "critic_layer_norm", "ensemble_size", "time_embed_dim", "seed",
    "out_dir"};

const std::set<std::string> kEvalKeys = {"checkpoint", "episodes", "k", "seed", "out_dir"};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + line + "'");
  return {std::move(key), std::move(value)};
}

TimeSampler sampler_from(const RunConfig& cfg, TimeSampler fallback) {
  TimeSampler s = fallback;
  const std::string name = cfg.get_string("sampler", "");
  if (name == "continuous") {
    s.strategy = TimeStrategy::Continuous;
  } else if (name == "continuous_b0") {
    s.strategy = TimeStrategy::ContinuousBZero;
  } else if (name == "discrete") {
    s.strategy = TimeStrategy::Discrete;
  } else if (!name.empty()) {
    throw ConfigError("unknown sampler '" + name + "' (expected continuous, continuous_b0, discrete)");
  }
  s.steps = cfg.get_size("time_steps", s.steps);
  if (s.strategy == TimeStrategy::Discrete && s.steps == 0) throw ConfigError("time_steps must be positive");
  return s;
}

LossWeighting weighting_from(const RunConfig& cfg) {
  LossWeighting w;
  w.p = cfg.get_double("loss_p", w.p);
  w.c = cfg.get_double("loss_c", w.c);
  if (!(w.p >= 0.0 && w.p < 1.0) || !(w.c > 0.0)) throw ConfigError("loss_p must lie in [0, 1) and loss_c be > 0");
  return w;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

const std::set<std::string>& toy_report_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = kToyKeys;
    k.erase("variant");
    return k;
  }();
  return keys;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      auto [key, value] = split_assignment(line);
      if (cfg.values_.count(key) != 0) throw ConfigError("duplicate key '" + key + "'");
      cfg.values_[key] = value;
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& assignment) {
  auto [key, value] = split_assignment(assignment);
  values_[key] = value;
}

void RunConfig::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (allowed.count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size() || !std::isfinite(v)) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  try {
    return static_cast<std::size_t>(std::stoull(s));
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' is out of range: '" + s + "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + it->second + "'");
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    RunConfig one;
    one.values_[key] = item;
    out.push_back(one.get_size(key, 0));
  }
  return out;
}

std::filesystem::path output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("MFQL_OUT"); env != nullptr && *env != '\0') return env;
  return cfg.get_string("out_dir", "out");
}

ToyTrainConfig toy_config_from(const RunConfig& cfg) {
  ToyTrainConfig c;
  c.variant = parse_variant(cfg.get_string("variant", std::string(variant_name(c.variant))));
  c.dist.kind = parse_toy_kind(cfg.get_string("dist", "checkerboard"));
  c.steps = cfg.get_size("steps", c.steps);
  c.batch = cfg.get_size("batch", c.batch);
  c.lr = cfg.get_double("lr", c.lr);
  c.grad_clip = cfg.get_double("grad_clip", c.grad_clip);
  c.hidden = cfg.get_sizes("hidden", c.hidden);
  c.time_embed_dim = cfg.get_size("time_embed_dim", c.time_embed_dim);
  c.sampler = sampler_from(cfg, c.sampler);
  c.weighting = weighting_from(cfg);
  c.seed = cfg.get_size("seed", c.seed);
  c.w2_samples = cfg.get_size("w2_samples", c.w2_samples);
  c.dump_steps = cfg.get_sizes("dump_steps", c.dump_steps);
  c.log_interval = cfg.get_size("log_interval", c.log_interval);
  if (c.batch == 0) throw ConfigError("batch must be positive");
  if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
  return c;
}

TrainConfig rl_config_from(const RunConfig& cfg) {
  TrainConfig c;
  c.variant = parse_variant(cfg.get_string("variant", std::string(variant_name(c.variant))));
  c.alpha0 = cfg.get_double("alpha0", c.alpha0);
  c.adaptive_alpha = cfg.get_bool("adaptive_alpha", c.adaptive_alpha);
  c.k = cfg.get_size("k", c.k);
  c.gamma = cfg.get_double("gamma", c.gamma);
  c.tau = cfg.get_double("tau", c.tau);
  c.batch = cfg.get_size("batch", c.batch);
  c.actor_lr = cfg.get_double("actor_lr", c.actor_lr);
  c.critic_lr = cfg.get_double("critic_lr", c.critic_lr);
  c.grad_clip = cfg.get_double("grad_clip", c.grad_clip);
  c.sampler = sampler_from(cfg, c.sampler);
  c.weighting = weighting_from(cfg);
  c.total_steps = cfg.get_size("total_steps", c.total_steps);
  c.log_interval = cfg.get_size("log_interval", c.log_interval);
  c.eval_interval = cfg.get_size("eval_interval", c.eval_interval);
  c.eval_episodes = cfg.get_size("eval_episodes", c.eval_episodes);
  c.alpha_schedule.interval = cfg.get_size("alpha_interval", c.alpha_schedule.interval);
  c.alpha_schedule.window = cfg.get_size("alpha_window", c.alpha_schedule.window);
  c.actor_hidden = cfg.get_sizes("actor_hidden", c.actor_hidden);
  c.critic_hidden = cfg.get_sizes("critic_hidden", c.critic_hidden);
  c.critic_layer_norm = cfg.get_bool("critic_layer_norm", c.critic_layer_norm);
  c.ensemble_size = cfg.get_size("ensemble_size", c.ensemble_size);
  c.time_embed_dim = cfg.get_size("time_embed_dim", c.time_embed_dim);
  c.seed = cfg.get_size("seed", c.seed);
  if (!(c.actor_lr > 0.0) || !(c.critic_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (c.eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
  c.validate();
  return c;
}

void write_samples_csv(const std::filesystem::path& path, const Tensor& samples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "x,y\n";
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    for (std::size_t j = 0; j < samples.cols(); ++j) out << (j ? "," : "") << format_double(samples(i, j));
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

int cmd_train_toy(const RunConfig& cfg, std::ostream& log) {
  cfg.require_known(kToyKeys);
  const ToyTrainConfig c = toy_config_from(cfg);
  const auto dir = output_dir(cfg);
  ensure_dir(dir);
  const ToyProgress progress = [&](std::size_t step, double loss) {
    if (step % c.log_interval == 0) log << "step " << step << " loss_mfi " << format_double(loss) << '\n';
  };
  const ToyTrainResult r = train_toy(c, progress);
  write_metrics_csv(dir / "metrics.csv", r.rows);
  for (const auto& [step, samples] : r.dumps) {
    write_samples_csv(dir / ("samples_" + std::to_string(step) + ".csv"), samples);
  }
  log << "final_w2 " << format_double(r.final_w2) << '\n';
  return kExitOk;
}

namespace {

OfflineDataset dataset_from(const RunConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.has("dataset_episodes")) {
    if (cfg.has("dataset")) throw ConfigError("set either dataset or dataset_episodes, not both");
    const std::size_t episodes = cfg.get_size("dataset_episodes", 0);
    if (episodes == 0) throw ConfigError("dataset_episodes must be positive");
    const std::uint64_t seed = cfg.get_size("dataset_seed", 0);
    Rng rng(seed);
    OfflineDataset ds = gen_offline_dataset(PointReachEnv{}, episodes, rng);
    ds.source_seed = seed;
    save_dataset(ds, dir / "dataset.csv");
    return ds;
  }
  const std::filesystem::path path = cfg.require_string("dataset");
  if (!std::filesystem::exists(path)) throw ConfigError("dataset file " + path.string() + " does not exist");
  return load_dataset(path);
}

}  // namespace

int cmd_train_rl(const RunConfig& cfg, std::ostream& log) {
  cfg.require_known(kRlKeys);
  const TrainConfig c = rl_config_from(cfg);
  const std::uint64_t eval_seed = cfg.get_size("eval_seed", 0);
  const auto dir = output_dir(cfg);
  ensure_dir(dir);
  const OfflineDataset ds = dataset_from(cfg, dir);
  const PointReachEnv env;
  TrainHooks hooks;
  hooks.evaluate = [&](const TrainState& st) {
    Rng rng(eval_seed);
    return rollout_eval(st.policy, st.critic, env, c.eval_episodes, c.k, rng);
  };
  hooks.on_row = [&](const TrainState&, const MetricsRow& row) {
    log << "step " << row.step << " loss_q " << format_double(*row.loss_q) << " loss_mfi "
        << format_double(*row.loss_mfi) << " alpha " << format_double(*row.alpha);
    if (row.eval_success) log << " eval_success " << format_double(*row.eval_success);
    log << '\n';
  };
  const TrainResult r = train(c, ds, hooks, TrainOutputs{dir / "metrics.csv", dir / "model.bin"});
  save_model(dir / "model.bin", r.state.policy, r.state.critic);
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.require_known(kEvalKeys);
  const std::size_t episodes = cfg.get_size("episodes", 50);
  if (episodes == 0) throw ConfigError("nothing to evaluate");
  const std::size_t k = cfg.get_size("k", 5);
  if (k == 0) throw ConfigError("K must be a positive integer");
  const std::filesystem::path path =
      cfg.has("checkpoint") ? std::filesystem::path(cfg.require_string("checkpoint")) : output_dir(cfg) / "model.bin";
  if (!std::filesystem::exists(path)) throw ConfigError("checkpoint " + path.string() + " does not exist");
  const LoadedModel model = load_model(path);

  const PointReachEnv env;
  double bound_sum = 0.0;
  std::size_t action_count = 0;
  const ActionFn act = [&](const Tensor& states, Rng& rng) {
    Tensor a = select_best_of_k(model.policy, model.critic, states, k, rng).actions;
    bound_sum += bound_loss(a) * static_cast<double>(a.size());
    action_count += a.size();
    return a;
  };
  Rng rng(cfg.get_size("seed", 0));
  const double success = rollout_eval(env, act, episodes, rng);
  const double bound = action_count == 0 ? 0.0 : bound_sum / static_cast<double>(action_count);
  log << "success_rate " << format_double(success) << '\n' << "bound_loss " << format_double(bound) << '\n';
  return kExitOk;
}

int cmd_variants_report(const RunConfig& cfg, std::ostream& log) {
  cfg.require_known(toy_report_keys());
  const ToyTrainConfig base = toy_config_from(cfg);
  const auto dir = output_dir(cfg);
  ensure_dir(dir);
  std::ofstream out(dir / "variants_report.csv");
  if (!out) throw IoError("cannot open " + (dir / "variants_report.csv").string() + " for writing");
  out << "variant,w2,wall_seconds\n";
  for (VariantId id : kAllVariants) {
    ToyTrainConfig c = base;
    c.variant = id;
    c.dump_steps = {};
    const auto start = std::chrono::steady_clock::now();
    double w2 = std::numeric_limits<double>::infinity();
    try {
      w2 = train_toy(c).final_w2;
    } catch (const NumericError& e) {
      log << variant_name(id) << " diverged: " << e.what() << '\n';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << variant_name(id) << " w2 " << format_double(w2) << '\n';
    out << variant_name(id) << ',' << format_double(w2) << ',' << format_double(secs) << '\n';
    out.flush();
  }
  if (!out) throw IoError("write failed for variants report");
  return kExitOk;
}

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    if (command == "train-toy") return cmd_train_toy(cfg, log);
    if (command == "train-rl") return cmd_train_rl(cfg, log);
    if (command == "eval") return cmd_eval(cfg, log);
    if (command == "variants-report") return cmd_variants_report(cfg, log);
    err << "error: unknown command '" << command << "' (expected train-toy, train-rl, eval, variants-report)\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace mfql
