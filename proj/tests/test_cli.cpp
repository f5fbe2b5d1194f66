#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv{"careseq"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = careseq::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("careseq_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(path("quick.json"))
        << R"({"embed_dim": 6, "hidden": 6, "epochs": 3, "batch": 8, "bow_iterations": 50})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string cohort(std::size_t patients) {
    const std::string p = path("cohort.jsonl");
    const Result r = run_cli({"gen-synth", "--patients", std::to_string(patients), "--seed", "5",
                              "--out", p});
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"gen-synth", "--patients", "3"}).code, 2);
  EXPECT_EQ(run_cli({"train", "--data", "x", "--out", "y", "--epochs", "3"}).code, 2);
}

TEST_F(Cli, BinaryExitCodes) {
  const std::string bin = CARESEQ_CLI_PATH;
  const int unknown = std::system((bin + " frobnicate >/dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(unknown));
  EXPECT_EQ(WEXITSTATUS(unknown), 2);
  const int missing = std::system(
      (bin + " eval --data /nonexistent --model-file /nonexistent --metrics-out " +
       path("m.json") + " >/dev/null 2>&1")
          .c_str());
  ASSERT_TRUE(WIFEXITED(missing));
  EXPECT_EQ(WEXITSTATUS(missing), 1);
}

TEST_F(Cli, GenSynthWritesRecordsAndProvenance) {
  const std::string p = cohort(10);
  EXPECT_EQ(line_count(slurp(p)), 10u);
  const auto meta = nlohmann::json::parse(slurp(p + ".meta.json"));
  EXPECT_EQ(meta.at("seed"), 5);
  EXPECT_TRUE(meta.contains("config_digest"));
  EXPECT_EQ(meta.at("records"), 10);
  const std::string first = slurp(p);
  cohort(10);
  EXPECT_EQ(slurp(p), first);
}

TEST_F(Cli, TrainThenEval) {
  const std::string data = cohort(60);
  for (const std::string model : {"mdmt", "mdmtp", "bow-lr", "deepr-mini"}) {
    const std::string model_file = path(model + ".json");
    const Result t = run_cli({"train", "--data", data, "--model", model, "--config",
                              path("quick.json"), "--out", model_file, "--history-out",
                              path(model + ".csv")});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.err.find("effective config:"), std::string::npos);
    const auto envelope = nlohmann::json::parse(slurp(model_file));
    EXPECT_EQ(envelope.at("kind"), model);
    EXPECT_TRUE(envelope.at("provenance").contains("seed"));
    EXPECT_TRUE(envelope.at("provenance").contains("config_digest"));

    const std::string metrics = path(model + ".metrics.json");
    const Result e = run_cli({"eval", "--data", data, "--model-file", model_file,
                              "--metrics-out", metrics});
    ASSERT_EQ(e.code, 0) << e.err;
    const auto m = nlohmann::json::parse(slurp(metrics));
    EXPECT_GE(m.at("auc").get<double>(), 0.0);
    EXPECT_LE(m.at("auc").get<double>(), 1.0);
    EXPECT_EQ(m.at("config_digest"), envelope.at("provenance").at("config_digest"));
    EXPECT_TRUE(m.contains("seed"));
  }
  const std::string history = slurp(path("mdmt.csv"));
  EXPECT_NE(history.find("config_digest="), std::string::npos);
  EXPECT_NE(history.find("epoch,train_loss,val_auc"), std::string::npos);
}

TEST_F(Cli, CrossValidationIsByteIdentical) {
  const std::string data = cohort(80);
  const std::vector<std::string> base{"cv", "--data", data, "--model", "mdmt", "--folds", "3",
                                      "--seed", "4", "--config", path("quick.json")};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  };
  const Result a = run_cli(with({"--metrics-out", path("a.json")}));
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = run_cli(with({"--metrics-out", path("b.json"), "--jobs", "3"}));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  const auto report = nlohmann::json::parse(slurp(path("a.json")));
  EXPECT_EQ(report.at("seed"), 4);
  EXPECT_EQ(report.at("k"), 3);
  EXPECT_TRUE(report.contains("config_digest"));
  EXPECT_EQ(report.at("folds").size(), 3u);
}

TEST_F(Cli, TraceAndEmbeddingExport) {
  const std::string data = cohort(30);
  const std::string model_file = path("m.json");
  ASSERT_EQ(run_cli({"train", "--data", data, "--model", "mdmtp", "--config", path("quick.json"),
                     "--out", model_file})
                .code,
            0);
  const Result t = run_cli({"trace", "--model-file", model_file, "--data", data, "--patient",
                            "S000003", "--out", path("trace.csv")});
  ASSERT_EQ(t.code, 0) << t.err;
  const std::string trace = slurp(path("trace.csv"));
  EXPECT_EQ(trace.rfind("# seed=", 0), 0u);
  EXPECT_NE(trace.find("config_digest="), std::string::npos);
  EXPECT_NE(trace.find("\nvisit,time,h_0,h_1,h_2,h_3,h_4,h_5,h_norm,risk\n"), std::string::npos);

  EXPECT_EQ(run_cli({"trace", "--model-file", model_file, "--data", data, "--patient", "nobody",
                     "--out", path("t2.csv")})
                .code,
            1);

  const Result e = run_cli({"embed-export", "--model-file", model_file, "--out", path("emb.csv")});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string emb = slurp(path("emb.csv"));
  EXPECT_EQ(emb.rfind("# seed=", 0), 0u);
  EXPECT_NE(emb.find("\nnamespace,code,e_0,e_1,e_2,e_3,e_4,e_5\n"), std::string::npos);
  const auto env = nlohmann::json::parse(slurp(model_file));
  const std::size_t codes =
      env.at("vocabulary").at("diseases").size() + env.at("vocabulary").at("treatments").size();
  EXPECT_EQ(line_count(emb), codes + 2);
}

TEST_F(Cli, GradcheckPasses) {
  const Result r = run_cli({"gradcheck", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("gradcheck passed"), std::string::npos) << r.out;
}

TEST_F(Cli, BadConfigIsRuntimeFailure) {
  std::ofstream(path("bad.json")) << R"({"nonsense": 1})";
  const std::string data = cohort(10);
  const Result r = run_cli({"train", "--data", data, "--model", "mdmt", "--config",
                            path("bad.json"), "--out", path("m.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nonsense"), std::string::npos) << r.err;
}
