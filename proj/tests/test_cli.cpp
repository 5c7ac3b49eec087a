#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "tempid/cli.hpp"

using namespace tempid;
namespace tt = tempid::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "tempid_cli_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, ValidateExitCodes) {
  auto r = run({"--output", "json", "validate", tt::data_path("chain3.json")});
  EXPECT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["valid"].get<bool>());
  EXPECT_TRUE(j["violations"].empty());

  r = run({"validate", tt::data_path("bad_row_sum.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("row 0"), std::string::npos);
  EXPECT_EQ(run({"validate", tt::data_path("cycle.json")}).code, 2);
  EXPECT_EQ(run({"validate", tt::data_path("missing.json")}).code, 2);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"sample", tt::data_path("chain3.json"), "--bogus"}).code, 1);
  EXPECT_EQ(run({"sample", tt::data_path("chain3.json"), "--m", "0"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"query", tt::data_path("chain3.json")}).code, 1);
  EXPECT_EQ(run({"query", tt::data_path("chain3.json"), "--target", "Nope"}).code, 1);
}

TEST(Cli, BadEvidenceTokenIsNamed) {
  const auto r = run({"--seed", "1", "sample", tt::data_path("chain3.json"), "--evidence", "X0=a,X9=b"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("X9"), std::string::npos);
}

TEST(Cli, InfectionQueryTable) {
  const auto r = run({"--seed", "3", "--output", "json", "query", tt::data_path("infection.json"), "--evidence",
                      "T_obs=3", "--target", "X0", "--m", "2000", "--h", "5", "--estimator", "mixture"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const auto& post = j["posteriors"]["X0"];
  EXPECT_EQ(post.size(), 6u);
  double total = 0.0;
  for (const auto& [label, row] : post.items()) {
    total += row["p"].get<double>();
    EXPECT_GE(row["se"].get<double>(), 0.0);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_TRUE(j["diagnostics"]["reachability_warning"].get<bool>());
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Cli, SameSeedSameBytes) {
  const std::vector<std::string> args{"--seed", "42", "--output", "json", "query", tt::data_path("chain3.json"),
                                      "--target", "X0,X1", "--m", "300", "--h", "3"};
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  auto threaded = args;
  threaded.insert(threaded.end(), {"--threads", "3"});
  EXPECT_EQ(run(threaded).out, a.out);
  auto other = args;
  other[1] = "43";
  EXPECT_NE(run(other).out, a.out);
}

TEST(Cli, MissingSeedIsDrawnAndPrinted) {
  const auto r = run({"sample", tt::data_path("chain3.json"), "--m", "5"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("seed: ", 0), 0u);
}

TEST(Cli, ReviseTableAndDot) {
  const auto dot = scratch("revised.dot");
  const auto r = run({"revise", tt::data_path("infection.json"), "--exclude", "X0:4,5,*", "--dot", dot});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("before"), std::string::npos);
  EXPECT_NE(r.out.find("{1,2,3}"), std::string::npos);
  EXPECT_NE(slurp(dot).find("graph emc"), std::string::npos);

  const auto j = nlohmann::json::parse(
      run({"--output", "json", "revise", tt::data_path("infection.json"), "--exclude", "X0:4,5,*"}).out);
  EXPECT_EQ(j["variables"][0]["after"], nlohmann::json::parse(R"(["1","2","3"])"));
  EXPECT_FALSE(j["infeasible"].get<bool>());
}

TEST(Cli, ContradictionsExitThree) {
  EXPECT_EQ(run({"revise", tt::data_path("infection.json"), "--restrict", "X1:1"}).code, 3);
  EXPECT_EQ(run({"--seed", "1", "sample", tt::data_path("infection.json"), "--evidence", "X0=4"}).code, 3);
  EXPECT_EQ(run({"--seed", "1", "sample", tt::data_path("locked.json"), "--h", "2", "--reachability", "fail"}).code,
            3);
}

TEST(Cli, RejectionBudgetExitsFour) {
  const auto r = run({"--seed", "1", "sample", tt::data_path("locked.json"), "--evidence", "X1=1,X2=2",
                      "--max-rejections", "20"});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("rejection rate"), std::string::npos);
}

TEST(Cli, HistoriesDump) {
  const auto path = scratch("histories.jsonl");
  const auto r = run({"--seed", "9", "sample", tt::data_path("chain3.json"), "--m", "7", "--h", "3", "--retain",
                      "all", "--histories", path});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["chain"].get<std::size_t>(), n / 3);
    EXPECT_EQ(j["sweep"].get<std::size_t>(), n % 3 + 1);
    EXPECT_EQ(j["values"]["X2"], "c");
    ++n;
  }
  EXPECT_EQ(n, 21u);
}

TEST(Cli, EmittedModelRoundTrips) {
  const auto path = scratch("infection.json");
  ASSERT_EQ(run({"--seed", "1", "demo", "infection", "--m", "20", "--emit-model", path}).code, 0);
  const auto mf = load_model_file(path);
  EXPECT_EQ(mf.diagram.nodes, infection::build_model({}).nodes);
  EXPECT_EQ(slurp(path), slurp(tt::data_path("infection.json")));
}

TEST(Cli, InfectionDemoReportsQueryAndNote) {
  const auto r = run({"--seed", "2", "demo", "infection", "--m", "3000", "--check"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("exposed to virus A"), std::string::npos);
  EXPECT_NE(r.out.find("normalizing constant"), std::string::npos);
  EXPECT_NE(r.out.find("check: pass"), std::string::npos);
}

TEST(Cli, ToxicityDemoSmallRun) {
  const auto r = run({"--seed", "4", "--output", "json", "demo", "toxicity", "--steps", "20", "--m", "200", "--h",
                      "60", "--rollouts", "500"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const auto s = j["survival"].get<std::vector<double>>();
  ASSERT_EQ(s.size(), 12u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_GE(s[i], 0.0);
    EXPECT_LE(s[i], 1.0);
    if (i > 0) {
      EXPECT_LE(s[i], s[i - 1]);
    }
  }
  EXPECT_EQ(run({"demo", "toxicity", "--params", tt::data_path("chain3.json")}).code, 2);
}
