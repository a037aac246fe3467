#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mfql/cli.hpp"
#include "mfql/errors.hpp"

using namespace mfql;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mfql_test_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& command, const RunConfig& cfg, std::string* err_text = nullptr) {
  std::ostringstream log;
  std::ostringstream err;
  const int code = run_command(command, cfg, log, err);
  if (err_text != nullptr) *err_text = err.str();
  return code;
}

RunConfig toy_config(const fs::path& out) {
  RunConfig cfg = RunConfig::parse(
      "steps=40\nbatch=32\nhidden=16,16\ntime_embed_dim=8\nw2_samples=64\n"
      "dump_steps=0,40\nlog_interval=20\n");
  cfg.set("out_dir=" + out.string());
  return cfg;
}

RunConfig rl_config(const fs::path& out) {
  RunConfig cfg = RunConfig::parse(
      "dataset_episodes=40\ndataset_seed=2\ntotal_steps=60\nbatch=32\nlog_interval=20\n"
      "eval_interval=30\neval_episodes=6\nactor_hidden=16,16\ncritic_hidden=16,16\n"
      "time_embed_dim=8\nseed=4\neval_seed=9\n");
  cfg.set("out_dir=" + out.string());
  return cfg;
}

}  // namespace

TEST_CASE("RunConfig parsing") {
  const RunConfig cfg = RunConfig::parse("# header\n a = 1 \n\nb=x # trailing\nlist=1, 2,3\nflag=true\n");
  CHECK(cfg.values().size() == 4);
  CHECK(cfg.get_size("a", 0) == 1);
  CHECK(cfg.get_string("b", "") == "x");
  CHECK(cfg.get_sizes("list", {}) == std::vector<std::size_t>{1, 2, 3});
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_double("missing", 0.5) == 0.5);

  CHECK_THROWS_AS(RunConfig::parse("novalue\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("=3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("a=1\na=2\n"), ConfigError);

  const RunConfig bad = RunConfig::parse("n=-3\nx=1.5e\nf=maybe\ns=4.0\n");
  CHECK_THROWS_AS(bad.get_size("n", 0), ConfigError);
  CHECK_THROWS_AS(bad.get_double("x", 0), ConfigError);
  CHECK_THROWS_AS(bad.get_bool("f", false), ConfigError);
  CHECK_THROWS_AS(bad.get_size("s", 0), ConfigError);
  CHECK_THROWS_AS(bad.require_string("absent"), ConfigError);
  CHECK_THROWS_AS(bad.require_known({"n", "x", "f"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/mfql.cfg"), ConfigError);
}

TEST_CASE("RunConfig overrides and builders") {
  RunConfig cfg = RunConfig::parse("variant=u\nlr=0.5\n");
  cfg.set("lr=0.25");
  cfg.set("sampler=continuous_b0");
  CHECK_THROWS_AS(cfg.set("broken"), ConfigError);
  const ToyTrainConfig toy = toy_config_from(cfg);
  CHECK(toy.variant == VariantId::PlainU);
  CHECK(toy.lr == 0.25);
  CHECK(toy.sampler.strategy == TimeStrategy::ContinuousBZero);

  CHECK_THROWS_AS(toy_config_from(RunConfig::parse("variant=nope\n")), ConfigError);
  CHECK_THROWS_AS(toy_config_from(RunConfig::parse("sampler=odd\n")), ConfigError);
  CHECK_THROWS_AS(rl_config_from(RunConfig::parse("k=0\n")), ConfigError);
  CHECK_THROWS_AS(rl_config_from(RunConfig::parse("gamma=1.5\n")), ConfigError);

  const TrainConfig rl = rl_config_from(RunConfig::parse("k=3\nalpha0=0.1\ncritic_hidden=8\nadaptive_alpha=false\n"));
  CHECK(rl.k == 3);
  CHECK(rl.alpha0 == 0.1);
  CHECK(rl.critic_hidden == std::vector<std::size_t>{8});
  CHECK_FALSE(rl.adaptive_alpha);
}

TEST_CASE("output directory precedence") {
  const RunConfig cfg = RunConfig::parse("out_dir=from_config\n");
  unsetenv("MFQL_OUT");
  CHECK(output_dir(RunConfig{}) == fs::path("out"));
  CHECK(output_dir(cfg) == fs::path("from_config"));
  setenv("MFQL_OUT", "from_env", 1);
  CHECK(output_dir(cfg) == fs::path("from_env"));
  unsetenv("MFQL_OUT");
}

TEST_CASE("unknown keys fail before any output is produced") {
  unsetenv("MFQL_OUT");
  const fs::path dir = fresh_dir("unknown");
  for (const char* command : {"train-toy", "train-rl", "eval", "variants-report"}) {
    RunConfig cfg = RunConfig::parse("not_a_key=1\n");
    cfg.set("out_dir=" + dir.string());
    std::string err;
    CHECK(run(command, cfg, &err) == kExitConfig);
    CHECK(err.find("not_a_key") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dir));
  CHECK(run("bogus", RunConfig{}) == kExitConfig);
}

TEST_CASE("train-toy writes metrics and sample dumps deterministically") {
  unsetenv("MFQL_OUT");
  const fs::path a = fresh_dir("toy_a");
  const fs::path b = fresh_dir("toy_b");
  REQUIRE(run("train-toy", toy_config(a)) == kExitOk);
  REQUIRE(run("train-toy", toy_config(b)) == kExitOk);
  CHECK(fs::exists(a / "samples_0.csv"));
  CHECK(fs::exists(a / "samples_40.csv"));
  const std::string metrics = slurp(a / "metrics.csv");
  CHECK(metrics == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "samples_40.csv") == slurp(b / "samples_40.csv"));

  const MetricsTable table = read_metrics_csv(a / "metrics.csv");
  const std::vector<double> w2 = table.column("eval_w2");
  REQUIRE(w2.size() == 2);
  CHECK(std::isfinite(w2.front()));
  CHECK(std::isfinite(w2.back()));
}

TEST_CASE("train-toy at zero steps dumps noise through the initial map") {
  unsetenv("MFQL_OUT");
  const fs::path dir = fresh_dir("toy_zero");
  RunConfig cfg = toy_config(dir);
  cfg.set("steps=0");
  cfg.set("dump_steps=0");
  REQUIRE(run("train-toy", cfg) == kExitOk);
  std::ifstream in(dir / "samples_0.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,y");
  std::size_t rows = 0;
  double sum_sq = 0.0;
  while (std::getline(in, line)) {
    double x = 0.0;
    double y = 0.0;
    char comma = 0;
    std::istringstream(line) >> x >> comma >> y;
    sum_sq += x * x + y * y;
    ++rows;
  }
  CHECK(rows == 64);
  CHECK(sum_sq == 0.0);
}

TEST_CASE("train-toy numeric blow-up exits with code 3") {
  unsetenv("MFQL_OUT");
  RunConfig cfg = toy_config(fresh_dir("toy_nan"));
  cfg.set("lr=1e300");
  cfg.set("grad_clip=0");
  std::string err;
  CHECK(run("train-toy", cfg, &err) == kExitNumeric);
  CHECK_FALSE(err.empty());
}

TEST_CASE("train-rl and eval") {
  const fs::path a = fresh_dir("rl_a");
  const fs::path b = fresh_dir("rl_b");
  unsetenv("MFQL_OUT");
  REQUIRE(run("train-rl", rl_config(a)) == kExitOk);
  setenv("MFQL_OUT", b.string().c_str(), 1);
  const fs::path ignored = fresh_dir("rl_ignored");
  REQUIRE(run("train-rl", rl_config(ignored)) == kExitOk);
  unsetenv("MFQL_OUT");
  CHECK_FALSE(fs::exists(ignored));

  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(fs::exists(a / "model.bin"));
  CHECK(fs::exists(a / "dataset.csv"));

  const MetricsTable table = read_metrics_csv(a / "metrics.csv");
  const std::vector<double> success = table.column("eval_success");
  REQUIRE(success.size() == 2);
  const double last = success.back();

  RunConfig ev = RunConfig::parse("episodes=6\nk=5\nseed=9\n");
  ev.set("checkpoint=" + (a / "model.bin").string());
  std::ostringstream log;
  std::ostringstream err;
  REQUIRE(run_command("eval", ev, log, err) == kExitOk);
  const std::string out = log.str();
  const auto pos = out.find("success_rate ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(out.substr(pos + 13)) == last);
  CHECK(out.find("bound_loss ") != std::string::npos);

  RunConfig zero = ev;
  zero.set("episodes=0");
  std::string msg;
  CHECK(run("eval", zero, &msg) == kExitConfig);
  CHECK(msg.find("nothing to evaluate") != std::string::npos);

  RunConfig missing = ev;
  missing.set("checkpoint=" + (a / "absent.bin").string());
  CHECK(run("eval", missing) == kExitConfig);

  RunConfig with_file = rl_config(fresh_dir("rl_file"));
  with_file.set("dataset=" + (a / "dataset.csv").string());
  CHECK(run("train-rl", with_file) == kExitConfig);

  RunConfig no_data = RunConfig::parse("dataset=" + (a / "nope.csv").string() + "\n");
  no_data.set("out_dir=" + fresh_dir("rl_nodata").string());
  CHECK(run("train-rl", no_data) == kExitConfig);
}

TEST_CASE("variants-report emits one row per variant") {
  unsetenv("MFQL_OUT");
  const fs::path dir = fresh_dir("report");
  RunConfig cfg = RunConfig::parse("steps=10\nbatch=16\nhidden=8\ntime_embed_dim=4\nw2_samples=32\n");
  cfg.set("out_dir=" + dir.string());
  REQUIRE(run("variants-report", cfg) == kExitOk);
  std::ifstream in(dir / "variants_report.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "variant,w2,wall_seconds");
  std::vector<std::string> names;
  while (std::getline(in, line)) names.push_back(line.substr(0, line.find(',')));
  REQUIRE(names.size() == kAllVariants.size());
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(names[i] == variant_name(kAllVariants[i]));

  RunConfig with_variant = cfg;
  with_variant.set("variant=u");
  CHECK(run("variants-report", with_variant) == kExitConfig);
}
