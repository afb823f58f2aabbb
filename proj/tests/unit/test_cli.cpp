#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "seedfill/pipeline.hpp"

using namespace seedfill;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSmallRun = R"({
  "scene": {"fixture": "cube-to-card"},
  "corrector": "jitter",
  "rng_seed": 5,
  "render": {"samples": 32},
  "train": {"warmup_steps": 12, "idu_rounds": 2, "steps_per_round": 6}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seedfill_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SEEDFILL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig small_config(const fs::path& out) {
  RunConfig c = parse_run_config(kSmallRun);
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Cli, PrintsSchemaAndEffectiveConfig) {
  const fs::path dir = scratch("print");
  EXPECT_EQ(run_cli("--print-schema", dir / "schema.txt"), kExitOk);
  EXPECT_NO_THROW((void)nlohmann::json::parse(slurp(dir / "schema.txt")));
  EXPECT_EQ(run_cli("--print-config --seed 17", dir / "config.txt"), kExitOk);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "config.txt")).at("rng_seed"), 17);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  const fs::path dir = scratch("config_errors");
  EXPECT_EQ(run_cli("--config " + write_config(dir, R"({"trian": {}})").string(), dir / "log1.txt"),
            kExitConfigInvalid);
  EXPECT_NE(slurp(dir / "log1.txt").find("trian"), std::string::npos);
  EXPECT_EQ(run_cli("--corrector magic --out " + (dir / "out").string(), dir / "log2.txt"), kExitConfigInvalid);
  EXPECT_EQ(run_cli("--stage bake", dir / "log3.txt"), kExitConfigInvalid);
  EXPECT_EQ(run_cli("--no-such-flag", dir / "log4.txt"), kExitConfigInvalid);
  EXPECT_EQ(run_cli("--config " + (dir / "absent.json").string(), dir / "log5.txt"), kExitConfigInvalid);
}

TEST(Cli, StageWithoutItsInputsExitsWithThree) {
  const fs::path dir = scratch("missing");
  EXPECT_EQ(run_cli("--stage train --out " + (dir / "out").string(), dir / "log.txt"), kExitMissingStage);
  EXPECT_NE(slurp(dir / "log.txt").find("needs the outputs of 'preprocess'"), std::string::npos);
}

TEST(Cli, UnreachableRemoteCorrectorExitsWithFour) {
  const fs::path dir = scratch("remote");
  const fs::path cfg = write_config(dir, R"({
    "scene": {"fixture": "cube-to-card"},
    "corrector": "remote:http://127.0.0.1:1",
    "remote": {"timeout_ms": 200, "max_attempts": 2, "backoff_ms": 1}
  })");
  const std::string common = "--config " + cfg.string() + " --out " + (dir / "out").string();
  ASSERT_EQ(run_cli(common + " --stage synth", dir / "synth.txt"), kExitOk);
  ASSERT_EQ(run_cli(common + " --stage fit", dir / "fit.txt"), kExitOk);
  EXPECT_EQ(run_cli(common + " --stage preprocess", dir / "pre.txt"), kExitCorrectorUnavailable);
}

TEST(ExitCodes, ExceptionMapping) {
  auto code = [](auto ex) { return exit_code_for(std::make_exception_ptr(ex)); };
  EXPECT_EQ(code(ConfigError("x")), kExitConfigInvalid);
  EXPECT_EQ(code(MissingPrerequisite("train", "preprocess", "p")), kExitMissingStage);
  EXPECT_EQ(code(CorrectorUnavailable(3, "down", 3)), kExitCorrectorUnavailable);
  EXPECT_EQ(code(TrainingDiverged("nan loss")), kExitTrainingDiverged);
  EXPECT_EQ(code(std::runtime_error("other")), kExitFailure);
}

TEST(Pipeline, RerunSkipsCurrentStagesAndOutputsAreDeterministic) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  std::ostringstream log;
  {
    Pipeline p(small_config(a), log);
    p.run("all");
    EXPECT_TRUE(p.skipped().empty());
  }
  for (const char* f : {"scene/stamp.json", "fit/field.bin", "preprocess/state.json", "train/field.bin",
                        "train/rounds.json", "eval/metrics.json", "eval/report.md"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  {
    Pipeline again(small_config(a), log);
    again.run("all");
    EXPECT_EQ(again.skipped(), (std::vector<std::string>{"synth", "fit", "preprocess", "train", "render", "eval"}));
  }
  {
    Pipeline other(small_config(b), log);
    other.run("all");
  }
  for (const char* f : {"train/field.bin", "preprocess/state.json", "eval/metrics.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;

  const nlohmann::json m = nlohmann::json::parse(slurp(a / "eval" / "metrics.json"));
  EXPECT_TRUE(m.at("ground_truth").get<bool>());
  EXPECT_GT(m.at("holdout_psnr_min").get<double>(), 10.0);
}

TEST(Pipeline, ChangedSettingsInvalidateDownstreamStages) {
  const fs::path dir = scratch("invalidate");
  std::ostringstream log;
  {
    Pipeline p(small_config(dir), log);
    p.run("synth");
    p.run("fit");
    p.run("preprocess");
  }
  RunConfig changed = small_config(dir);
  changed.preprocess.lambda_nonseed = 0.3;
  Pipeline p(changed, log);
  p.run("synth");
  p.run("fit");
  p.run("preprocess");
  EXPECT_EQ(p.skipped(), (std::vector<std::string>{"synth", "fit"}));
}
