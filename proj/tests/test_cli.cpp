#include "marconi/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "marconi/workload.hpp"

using namespace marconi;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "marconi-sim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("marconi_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string small_trace() {
    const auto p = path("trace.jsonl");
    const auto r = run({"gen-trace", "--out", p, "--seed", "3", "--n-sessions", "8", "--system-prompt-len-mean",
                        "200", "--user-len-mean", "50", "--output-len-mean", "20"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenTraceIsDeterministic) {
  const auto a = path("a.jsonl");
  const auto b = path("b.jsonl");
  ASSERT_EQ(run({"gen-trace", "--out", a, "--seed", "9", "--n-sessions", "5"}).code, kExitOk);
  ASSERT_EQ(run({"gen-trace", "--out", b, "--seed", "9", "--n-sessions", "5"}).code, kExitOk);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_FALSE(load_trace(a).empty());
}

TEST_F(CliTest, GenTraceLengthFlags) {
  const auto p = path("c.jsonl");
  ASSERT_EQ(run({"gen-trace", "--out", p, "--n-sessions", "4", "--rounds-dist", "constant", "--rounds-mean", "2",
                 "--output-len-dist", "constant", "--output-len-mean", "7"})
                .code,
            kExitOk);
  const Trace t = load_trace(p);
  EXPECT_EQ(t.size(), 8u);
  for (const auto& r : t) EXPECT_EQ(r.output_tokens.size(), 7u);
}

TEST_F(CliTest, RunNoCacheWritesOutputs) {
  const auto trace = small_trace();
  const auto out = path("out");
  const auto r = run({"run", "--trace", trace, "--policy", "no_cache", "--out-dir", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(slurp(fs::path(out) / "no_cache.json"));
  EXPECT_EQ(j["token_hit_rate"], 0.0);
  EXPECT_EQ(j["ttft_model"]["kind"], "analytical_proxy");
  EXPECT_TRUE(fs::exists(fs::path(out) / "no_cache.csv"));
  EXPECT_NE(r.out.find("no_cache"), std::string::npos);
}

TEST_F(CliTest, CompareListsEveryPolicy) {
  const auto trace = small_trace();
  const auto r = run({"compare", "--trace", trace, "--out-dir", path("out"), "--capacity-gb", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* p : {"marconi", "sglang_plus", "vllm_plus"}) {
    EXPECT_NE(r.out.find(p), std::string::npos) << p;
    EXPECT_TRUE(fs::exists(fs::path(path("out")) / (std::string(p) + ".json")));
  }
}

TEST_F(CliTest, SweepProducesOneRowPerPoint) {
  const auto trace = small_trace();
  const auto r = run({"sweep", "--trace", trace, "--out-dir", path("out"), "--policies", "sglang_plus,vllm_plus",
                      "--capacities-gb", "1,4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(path("out"))) files += e.path().extension() == ".json";
  EXPECT_EQ(files, 4u);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  const auto trace = small_trace();
  const auto cfg = path("run.cfg");
  std::ofstream(cfg) << "# test config\n[policy]\nalpha = 1.5\ntuner_enabled = false\n[cache]\ncapacity_bytes = "
                        "3000000000\n";
  const auto out = path("out");
  ASSERT_EQ(run({"run", "--trace", trace, "--config", cfg, "--out-dir", out}).code, kExitOk);
  auto j = nlohmann::json::parse(slurp(fs::path(out) / "marconi.json"));
  EXPECT_EQ(j["alpha_final"], 1.5);
  EXPECT_EQ(j["capacity"], 3'000'000'000LL);

  ASSERT_EQ(run({"run", "--trace", trace, "--config", cfg, "--out-dir", out, "--alpha", "0.5"}).code, kExitOk);
  j = nlohmann::json::parse(slurp(fs::path(out) / "marconi.json"));
  EXPECT_EQ(j["alpha_final"], 0.5);
}

TEST_F(CliTest, ExitCodes) {
  const auto trace = small_trace();
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"run"}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"run", "--trace", path("missing.jsonl")}).code, kExitMissingFile);
  EXPECT_EQ(run({"run", "--trace", trace, "--config", path("missing.cfg")}).code, kExitMissingFile);
  EXPECT_EQ(run({"run", "--trace", trace, "--policy", "lfu"}).code, kExitBadConfig);
  EXPECT_EQ(run({"run", "--trace", trace, "--d-model", "0"}).code, kExitBadConfig);

  const auto bad_cfg = path("bad.cfg");
  std::ofstream(bad_cfg) << "[model]\nno_such_key = 1\n";
  const auto r = run({"run", "--trace", trace, "--config", bad_cfg});
  EXPECT_EQ(r.code, kExitBadConfig);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;

  const auto bad_trace = path("bad.jsonl");
  std::ofstream(bad_trace) << "{oops\n";
  EXPECT_EQ(run({"run", "--trace", bad_trace}).code, kExitReplayFailed);
}

TEST_F(CliTest, BinaryHelpExitsCleanly) {
  const std::string cmd = std::string(MARCONI_CLI_PATH) + " --help > " + path("help.txt");
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_NE(slurp(path("help.txt")).find("gen-trace"), std::string::npos);
}
