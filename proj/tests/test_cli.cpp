#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "penprior/json_io.hpp"

namespace fs = std::filesystem;
using penprior::Json;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("penprior_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliRun cli(const std::string& args) {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = std::string(PENPRIOR_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string write_file(const std::string& name, const std::string& text) {
  const auto p = scratch() / name;
  std::ofstream(p) << text;
  return p.string();
}

const char* kArch = R"({"layers":[{"l":1,"n_l":300,"P_l":784},{"l":2,"n_l":10,"P_l":300}],"n":60000,"B":100})";

}  // namespace

TEST(Cli, DeriveL2DiracGivesGaussianHalf) {
  const CliRun r = cli("derive-prior --penalty l2 --lambda 1 --posterior dirac");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["prior"]["form"], "Gaussian");
  EXPECT_DOUBLE_EQ(j["prior"]["var"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["prior"]["mean"].get<double>(), 0.0);
}

TEST(Cli, DeriveNuDependentPolynomialExitsOne) {
  const CliRun r = cli("derive-prior --penalty poly --coeffs 0,1 --posterior gaussian --sigma2 1,2");
  ASSERT_EQ(r.code, 1) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_FALSE(j["condition_A"]["holds"].get<bool>());
  // r = mu^2 fits N(0, 1/2) with K(s) = -(2s - 1 - ln 2s) / 2, so K(1) and K(2) differ by 1 - ln(2) / 2.
  EXPECT_NEAR(j["condition_A"]["max_deviation"].get<double>(), 1.0 - 0.5 * std::log(2.0), 1e-9);
}

TEST(Cli, InputErrorsExitTwo) {
  EXPECT_EQ(cli("derive-prior --penalty l2 --posterior dirac").code, 2);
  EXPECT_EQ(cli("derive-prior --penalty banana --lambda 1").code, 2);
  EXPECT_EQ(cli("rate-bound --gamma 1.5").code, 2);
  EXPECT_EQ(cli("rate-bound --gamma 0").code, 2);
  EXPECT_EQ(cli("plan-lambda --arch '{\"layers\":[]}' --penalty l2").code, 2);
  EXPECT_EQ(cli("train-prune --lambda abc").code, 2);
  EXPECT_EQ(cli("verify --penalty l1 --lambda 4 --prior cauchy:1").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("renyi --gamma 1 --beta gaussian:1 --alpha gaussian:2").code, 2);
}

TEST(Cli, VerifyLaplaceCorrespondence) {
  const CliRun r = cli("verify --penalty l1 --lambda 4 --prior laplace:4 --posterior dirac");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_LE(j["kl_report"]["max_residual"].get<double>(), 1e-10);
}

TEST(Cli, VerifyWrongPriorExitsOne) {
  EXPECT_EQ(cli("verify --penalty l1 --lambda 4 --prior laplace:2 --posterior dirac").code, 1);
}

TEST(Cli, PlanLambdaGroupLassoBayesian) {
  const auto arch = write_file("arch.json", kArch);
  const auto csv = (scratch() / "plan.csv").string();
  const CliRun r = cli("plan-lambda --arch " + arch + " --penalty group-lasso --scheme bayesian --csv " + csv);
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  ASSERT_EQ(j["per_layer"].size(), 2u);
  for (const auto& row : j["per_layer"]) {
    const double P = row["P_l"].get<double>();
    EXPECT_NEAR(row["lambda_l"].get<double>(), std::sqrt(P * (P + 1.0)), 1e-12 * P);
  }
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), "l,n_l,P_l,lambda_l");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(Cli, PlanLambdaInlineArchitectureUsual) {
  const CliRun r = cli(std::string("plan-lambda --arch '") + kArch + "' --penalty l2 --scheme usual --global 0.001");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  for (const auto& row : j["per_layer"]) EXPECT_DOUBLE_EQ(row["lambda_l"].get<double>(), 1.0);
}

TEST(Cli, OutFileIsByteIdenticalOnRerun) {
  const std::vector<std::string> commands{
      "rate-bound --gamma 0.5 --n 100,1000 --mc-samples 5000 --seed 3",
      "train-prune --samples 300 --hidden 16 --max-epochs 40 --patience 5 --seed 4",
      "verify --penalty group-lasso --lambda 2 --dim 3 --prior expnorm:2 --posterior gaussian --sigma2 0.5 "
      "--mc-samples 2000 --seed 5",
      "renyi --gamma 2 --penalty poly --coeffs 0,0.25 --sigma2 1 --seed 6"};
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const auto a = (scratch() / ("a" + std::to_string(i) + ".json")).string();
    const auto b = (scratch() / ("b" + std::to_string(i) + ".json")).string();
    const CliRun ra = cli(commands[i] + " --out " + a);
    const CliRun rb = cli(commands[i] + " --out " + b);
    ASSERT_EQ(ra.code, rb.code) << commands[i];
    ASSERT_NE(ra.code, 2) << ra.err;
    const std::string ta = slurp(a);
    EXPECT_FALSE(ta.empty()) << commands[i];
    EXPECT_EQ(ta, slurp(b)) << commands[i];
    // With --out the report goes to the file and the summary to stdout.
    EXPECT_FALSE(ra.out.empty());
    EXPECT_EQ(ra.out.find('{'), std::string::npos);
  }
}

TEST(Cli, TrainPruneSmallRun) {
  const CliRun r = cli("train-prune --samples 300 --hidden 16 --max-epochs 60 --patience 5 --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  const auto& rep = j["report"];
  EXPECT_GE(rep["final_test_acc"].get<double>(), 0.0);
  EXPECT_LE(rep["final_test_acc"].get<double>(), 1.0);
  EXPECT_LE(rep["phase1_epochs"].get<int>() + rep["phase2_epochs"].get<int>(), 60);
  EXPECT_EQ(rep["hidden_total"].get<int>(), 16);
  // n follows the training split: 300 - 2 * 45.
  EXPECT_EQ(j["architecture"]["n"].get<long>(), 210);
}

TEST(Cli, TrainPruneSweepWritesCsv) {
  const auto csv = (scratch() / "sweep.csv").string();
  const CliRun r = cli("train-prune --sweep --lambda 0.001,0.01 --samples 200 --hidden 8 --max-epochs 20 --patience 3 "
                    "--csv " + csv);
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["sweep"]["entries"].size(), 2u);
  const std::string text = slurp(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 2 * 3);
}

TEST(Cli, TrainPruneFromCsvData) {
  std::ostringstream s;
  s << "x0,x1,label\n";
  for (int i = 0; i < 120; ++i) s << (i % 2 ? 2.0 : -2.0) + 0.01 * i << ',' << 0.5 * (i % 7) << ',' << i % 2 << '\n';
  const auto path = write_file("data.csv", s.str());
  const CliRun r = cli("train-prune --data " + path + " --hidden 4 --max-epochs 30 --patience 5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(r.out)["architecture"]["layers"][0]["P_l"].get<int>(), 2);
  EXPECT_EQ(cli("train-prune --data " + (scratch() / "missing.csv").string()).code, 2);
}

TEST(Cli, RateBoundGammaHalfPasses) {
  const CliRun r = cli("rate-bound --gamma 0.5 --n 100,1000,10000 --mc-samples 20000");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_TRUE(j["verification"]["all_hold"].get<bool>());
  EXPECT_EQ(cli("rate-bound --gamma 0.5 --n 100 --constants 0.5,0,0 --mc-samples 2000").code, 1);
}

TEST(Cli, RenyiDivergenceBetweenGaussians) {
  const CliRun r = cli("renyi --gamma 2 --beta gaussian:1 --alpha gaussian:2");
  ASSERT_EQ(r.code, 0) << r.err;
  // Zero-mean Gaussians: D = ln(s2/s1)/2 - ln(v/s2) / (2(g-1)) with v = g s2 + (1-g) s1.
  const double g = 2.0, s1 = 1.0, s2 = 2.0, vg = g * s2 + (1 - g) * s1;
  const double expected = 0.5 * std::log(s2 / s1) - std::log(vg / s2) / (2.0 * (g - 1.0));
  EXPECT_NEAR(Json::parse(r.out)["result"]["value"].get<double>(), expected, 1e-8);
}

TEST(Cli, RenyiCandidateMode) {
  const CliRun r = cli("renyi --gamma 2 --penalty poly --coeffs 0,0.25 --sigma2 1 --grid-points 1024");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["mode"], "candidate");
  EXPECT_EQ(j["candidate"]["alpha"]["n_points"].get<int>(), 1024);
}

TEST(Cli, HelpListsEveryFlag) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"derive-prior",
       {"--penalty", "--lambda", "--dim", "--coeffs", "--posterior", "--sigma2", "--epsilon", "--engine"}},
      {"verify",
       {"--penalty", "--lambda", "--dim", "--coeffs", "--posterior", "--sigma2", "--epsilon", "--prior", "--mu-lo",
        "--mu-hi", "--mu-points", "--nodes", "--mc-samples"}},
      {"plan-lambda", {"--arch", "--penalty", "--scheme", "--global", "--mixing-gamma", "--annotate", "--csv"}},
      {"train-prune",
       {"--arch", "--penalty", "--scheme", "--lambda", "--data", "--samples", "--features", "--classes", "--noise",
        "--separation", "--hidden", "--batch", "--activation", "--lr", "--patience", "--max-epochs", "--threshold",
        "--penalty-step", "--mixing-gamma", "--sweep", "--csv"}},
      {"rate-bound",
       {"--gamma", "--n", "--w-star", "--noise-var", "--radius", "--prior-mean", "--prior-var", "--mc-samples",
        "--constants"}},
      {"renyi",
       {"--gamma", "--beta", "--alpha", "--prior-dim", "--penalty", "--lambda", "--dim", "--coeffs", "--posterior",
        "--sigma2", "--epsilon", "--K", "--domain", "--grid-points", "--mc-samples"}},
  };
  const CliRun top = cli("--help");
  EXPECT_EQ(top.code, 0);
  for (const auto& [sub, list] : flags) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    const CliRun r = cli(sub + " --help");
    ASSERT_EQ(r.code, 0) << sub;
    for (const auto& f : list) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
    for (const char* f : {"--out", "--seed", "--tolerance", "--help"})
      EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
    // Flags outside the documented set are refused.
    EXPECT_EQ(cli(sub + " --undocumented-flag 1").code, 2) << sub;
  }
}
