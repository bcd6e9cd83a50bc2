#include <noisy_cg/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace noisy_cg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "noisy_cg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::parse_and_run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string preset(const std::string& name) {
  return (fs::path(NOISY_CG_SOURCE_DIR) / "presets" / (name + ".cfg")).string();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("noisy_cg_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

const std::vector<std::string> small = {"--set", "problem.n=100", "--set", "run.budget=2",
                                        "--set", "run.seeds=1,2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, TrajectoryHappyPath) {
  TempDir d;
  const auto r = run(with({"trajectory", "--config", preset("stochastic_b"), "-o", d.path().string()}, small));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d.path() / "trajectory.csv"));
  EXPECT_NE(r.out.find("no_accum_ratio"), std::string::npos);
  EXPECT_NE(r.out.find("no accumulation"), std::string::npos);
  const auto manifest = slurp(d.path() / "manifest.txt");
  EXPECT_NE(manifest.find("# file: trajectory.csv"), std::string::npos);
  const auto resolved = manifest.substr(manifest.find("# resolved configuration\n") + 25);
  const auto cfg = config::parse(resolved);
  EXPECT_EQ(cfg.problem.n, 100u);
  EXPECT_EQ(cfg.output_dir, d.path().string());
}

TEST(Cli, SweepWritesFitsAndIsDeterministic) {
  TempDir d;
  const auto args = with({"sweep-delta", "-c", preset("table2_stochastic"), "-o", d.path().string()},
                         with(small, {"--set", "noise.delta_grid=linspace(0, 0.1, 5)"}));
  ASSERT_EQ(run(args).code, 0);
  const auto sweep = slurp(d.path() / "sweep.csv"), fits = slurp(d.path() / "fits.csv");
  EXPECT_EQ(sweep.substr(0, sweep.find('\n')),
            "family,noise_kind,n,grid_param_name,grid_value,seed,plateau_error_f,final_error_x,status");
  EXPECT_EQ(fits.substr(0, fits.find('\n')), "family,model,coef0,coef1,coef2,r_squared,loglog_slope");
  const auto r2 = run(args);
  ASSERT_EQ(r2.code, 0);
  EXPECT_NE(r2.out.find("fit affine"), std::string::npos);
  EXPECT_EQ(slurp(d.path() / "sweep.csv"), sweep);
  EXPECT_EQ(slurp(d.path() / "fits.csv"), fits);
}

TEST(Cli, SweepRAndCompare) {
  TempDir d;
  auto r = run(with({"sweep-r", "-c", preset("table3_matrix_noise"), "-o", (d.path() / "r").string()},
                    with(small, {"--set", "problem.r_grid=linspace(5, 50, 5)"})));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("slope="), std::string::npos);
  r = run(with({"compare", "-c", preset("compare_nesterov"), "-o", (d.path() / "c").string()}, small));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d.path() / "c" / "compare.csv"));
  EXPECT_NE(r.out.find("nesterov_iters"), std::string::npos);
}

TEST(Cli, ValidateConfigEchoesResolvedParameters) {
  const auto r = run({"validate-config", preset("table2_adversarial")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("problem.n = 1000\n"), std::string::npos);
  EXPECT_NE(r.out.find("problem.r = 2000\n"), std::string::npos);
  EXPECT_NE(r.out.find("noise.delta_grid = 0, "), std::string::npos);
  EXPECT_NE(r.out.find(", 0.1\n"), std::string::npos);
  EXPECT_EQ(config::parse(r.out), config::load_config(preset("table2_adversarial")));
}

TEST(Cli, ValidateEveryPresetRoundTrips) {
  for (const auto& e : fs::recursive_directory_iterator(fs::path(NOISY_CG_SOURCE_DIR) / "presets")) {
    if (e.path().extension() != ".cfg") continue;
    const auto r = run({"validate-config", "-c", e.path().string()});
    ASSERT_EQ(r.code, 0) << e.path() << ": " << r.err;
    EXPECT_EQ(config::parse(r.out), config::load_config(e.path())) << e.path();
  }
}

TEST(Cli, MissingConfig) {
  const auto r = run({"sweep-delta", "--config", "missing.cfg"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("config not found"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("trajectory"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"trajectory"}).code, 2);
}

TEST(Cli, BadKeyNamesTheKey) {
  const auto r = run({"trajectory", "-c", preset("stochastic_b"), "--set", "noise.sigma=3"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("noise.sigma"), std::string::npos);
  const auto v = run({"sweep-delta", "-c", preset("stochastic_b")});
  EXPECT_EQ(v.code, 1);
  EXPECT_NE(v.err.find("noise.delta_grid"), std::string::npos);
}

TEST(Cli, OutputPathIsAFile) {
  TempDir d;
  const auto blocker = d.path() / "file";
  std::ofstream(blocker) << "x";
  const auto r = run(with({"trajectory", "-c", preset("stochastic_b"), "-o", (blocker / "sub").string()}, small));
  EXPECT_EQ(r.code, 4);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = NOISY_CG_CLI;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(bin + " validate-config " + preset("table1_matrix_noise")), 0);
  EXPECT_EQ(status(bin + " sweep-delta --config missing.cfg"), 1);
  EXPECT_EQ(status(bin + " nonsense"), 2);
  EXPECT_EQ(status(bin + " --help"), 0);
}
