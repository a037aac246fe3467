#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mfql/qlearning.hpp"
#include "mfql/toy.hpp"

namespace mfql {

/// Flat key=value configuration: one pair per line, `#` starts a comment.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Applies a `key=value` override; throws ConfigError when malformed.
  void set(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// Throws ConfigError naming the first key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3 };

ToyTrainConfig toy_config_from(const RunConfig& cfg);
TrainConfig rl_config_from(const RunConfig& cfg);

/// Output directory: MFQL_OUT when set, else `out_dir`, else "out".
std::filesystem::path output_dir(const RunConfig& cfg);

/// Commands write artifacts under output_dir and progress to `log`.
int cmd_train_toy(const RunConfig& cfg, std::ostream& log);
int cmd_train_rl(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_variants_report(const RunConfig& cfg, std::ostream& log);

/// Dispatches `command`, mapping library errors to exit codes with a message on `err`.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log, std::ostream& err);

void write_samples_csv(const std::filesystem::path& path, const Tensor& samples);

}  // namespace mfql
