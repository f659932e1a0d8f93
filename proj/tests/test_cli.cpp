#include "../tools/cli.hpp"
#include "lorid/io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

namespace lorid {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lorid");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = (dir_ / "run.cfg").string();
    std::ofstream(config_) << "T=1000\nbeta_start=1e-4\nbeta_end=0.02\nseed=3\n"
                              "t=20\nL=2\ndim=4\ntrials=500\n";
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  test::TempDir dir_{"cli"};
  std::string config_;
};

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(run_cli({"--help"}).code, cli::kPass);
  EXPECT_EQ(run_cli({"verify", "--help"}).code, cli::kPass);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kUsageError);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run_cli({"curves", "--kind", "mmse", "--out", path("x.csv"), "--config", config_, "--bogus"}).code,
            cli::kUsageError);
  EXPECT_EQ(run_cli({"curves", "--kind", "nope", "--out", path("x.csv"), "--config", config_}).code,
            cli::kUsageError);
  // Unlabeled kinds reject --labels-out.
  EXPECT_EQ(run_cli({"gen-data", "--kind", "gaussian", "--n", "4", "--out", path("g.lten"),
                     "--labels-out", path("l.lten")})
                .code,
            cli::kUsageError);
  // Labeled kinds require it.
  EXPECT_EQ(run_cli({"gen-data", "--kind", "stripes", "--n", "4", "--out", path("s.lten")}).code,
            cli::kUsageError);
  const CliResult bad_set = run_cli({"verify", "--theorem", "2", "--config", config_, "--set", "nokey"});
  EXPECT_EQ(bad_set.code, cli::kUsageError);
  EXPECT_NE(bad_set.err.find("error"), std::string::npos);
}

TEST_F(CliTest, MmseCurveStartsAtOne) {
  ASSERT_EQ(run_cli({"curves", "--kind", "mmse", "--out", path("m.csv"), "--config", config_}).code,
            cli::kPass);
  const auto rows = read_csv_rows(path("m.csv"));
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"snr", "mmse_gaussian", "mmse_binary"}));
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(std::stod(rows[1][1]), 1.0);
  EXPECT_EQ(std::stod(rows[1][2]), 1.0);
}

TEST_F(CliTest, SnrCurveIsStrictlyDecreasing) {
  ASSERT_EQ(run_cli({"curves", "--kind", "snr", "--out", path("s.csv"), "--config", config_}).code,
            cli::kPass);
  const auto rows = read_csv_rows(path("s.csv"));
  ASSERT_EQ(rows.size(), 1001u);
  for (std::size_t i = 2; i < rows.size(); ++i)
    ASSERT_LT(std::stod(rows[i][2]), std::stod(rows[i - 1][2])) << i;
}

TEST_F(CliTest, LoopCurveCsvHasColumns) {
  ASSERT_EQ(run_cli({"curves", "--kind", "fig2", "--out", path("f.csv"), "--config", config_}).code,
            cli::kPass);
  const auto rows = read_csv_rows(path("f.csv"));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"effective_t", "L", "t_over_L", "value"}));
  EXPECT_EQ(rows.size(), 1u + 4 * 10);
}

TEST_F(CliTest, VerifyKlWithIdenticalPairsPasses) {
  const CliResult r = run_cli({"verify", "--theorem", "1", "--identical", "--config", config_});
  EXPECT_EQ(r.code, cli::kPass) << r.out << r.err;
  EXPECT_NE(r.out.find("theorem 1: PASS"), std::string::npos);
}

TEST_F(CliTest, VerifyLoopCurveFailsAtSaturation) {
  const CliResult r = run_cli({"verify", "--theorem", "4", "--config", config_, "--set",
                               "effective_t=600", "--set", "L=1"});
  EXPECT_EQ(r.code, cli::kCheckFailure) << r.out << r.err;
  EXPECT_NE(r.out.find("theorem 4: FAIL"), std::string::npos);
  const CliResult ok = run_cli({"verify", "--theorem", "4", "--config", config_, "--set",
                                "effective_t=200,400", "--set", "L=1", "--out", path("t4.csv")});
  EXPECT_EQ(ok.code, cli::kPass) << ok.out << ok.err;
  EXPECT_TRUE(std::filesystem::exists(path("t4.csv")));
}

TEST_F(CliTest, VerifyGaussianBoundsPass) {
  for (const char* th : {"2", "3"}) {
    const CliResult r = run_cli({"verify", "--theorem", th, "--config", config_});
    EXPECT_EQ(r.code, cli::kPass) << th << "\n" << r.out << r.err;
  }
}

TEST_F(CliTest, GenDataAndPurifyAreDeterministic) {
  for (const char* name : {"a.lten", "b.lten"})
    ASSERT_EQ(run_cli({"gen-data", "--kind", "gaussian", "--n", "5", "--dim", "4", "--seed", "9",
                       "--out", path(name)})
                  .code,
              cli::kPass);
  EXPECT_EQ(slurp(path("a.lten")), slurp(path("b.lten")));
  ASSERT_EQ(run_cli({"train-denoiser", "--kind", "gaussian", "--data", path("a.lten"), "--out",
                     path("prior.lten")})
                .code,
            cli::kPass);
  for (const char* name : {"p1.lten", "p2.lten"}) {
    const CliResult r = run_cli({"purify", "--input", path("a.lten"), "--denoiser", path("prior.lten"),
                                 "--batch", "--out", path(name), "--config", config_});
    ASSERT_EQ(r.code, cli::kPass) << r.err;
  }
  EXPECT_EQ(slurp(path("p1.lten")), slurp(path("p2.lten")));
  EXPECT_EQ(read_tensor(std::filesystem::path(path("p1.lten"))).shape(), (Shape{5, 4}));
  EXPECT_EQ(run_cli({"purify", "--input", path("a.lten"), "--denoiser", path("missing.lten"),
                     "--out", path("p3.lten"), "--config", config_})
                .code,
            cli::kUsageError);
}

TEST_F(CliTest, CalibrateSinglePointGrid) {
  ASSERT_EQ(run_cli({"gen-data", "--kind", "two-gaussians", "--n", "60", "--out", path("x.lten"),
                     "--labels-out", path("y.lten")})
                .code,
            cli::kPass);
  ASSERT_EQ(run_cli({"train-classifier", "--data", path("x.lten"), "--labels", path("y.lten"), "--out",
                     path("clf.lten"), "--epochs", "5"})
                .code,
            cli::kPass);
  ASSERT_EQ(run_cli({"train-denoiser", "--kind", "gaussian", "--data", path("x.lten"), "--out",
                     path("den.lten")})
                .code,
            cli::kPass);
  const CliResult r = run_cli({"calibrate", "--data", path("x.lten"), "--labels", path("y.lten"),
                               "--classifier", path("clf.lten"), "--denoiser", path("den.lten"),
                               "--epsilon", "0.5", "--steps", "3", "--t-grid", "10", "--L-grid", "1",
                               "--out", path("cal.csv"), "--config", config_});
  ASSERT_EQ(r.code, cli::kPass) << r.err;
  EXPECT_NE(r.out.find("recommended t=10 L=1"), std::string::npos) << r.out;
  const auto rows = read_csv_rows(path("cal.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][4], "1");

  const CliResult ev = run_cli({"attack-eval", "--data", path("x.lten"), "--labels", path("y.lten"),
                                "--classifier", path("clf.lten"), "--denoiser", path("den.lten"),
                                "--epsilon", "0.5", "--steps", "3", "--out", path("acc.csv"),
                                "--config", config_});
  ASSERT_EQ(ev.code, cli::kPass) << ev.err;
  const auto acc = read_csv_rows(path("acc.csv"));
  ASSERT_GE(acc.size(), 3u);
  EXPECT_EQ(acc[1][0], "standard");
  EXPECT_EQ(acc[2][0], "attacked");
}

}  // namespace
}  // namespace lorid
