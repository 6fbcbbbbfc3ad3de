#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <mwaddr/config_io.hpp>
#include <mwaddr/planner.hpp>

namespace fs = std::filesystem;
using namespace mwaddr;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mwaddr_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult cli(const std::string& args, const fs::path& cwd) {
  const fs::path log = cwd / "stdout.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" MWADDR_CLI_PATH "' " + args + " > '" +
                          log.string() + "' 2> '" + (cwd / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  return r;
}

// Numeric value of `key = <number> ...` in a report.
double report_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " = ", 0) == 0) return std::stod(line.substr(key.size() + 3));
  }
  ADD_FAILURE() << "missing key " << key << " in\n" << text;
  return 0.0;
}

}  // namespace

TEST(Cli, CalibrateReport) {
  const fs::path dir = scratch("calibrate");
  const CliResult r = cli("calibrate", dir);
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(report_value(r.out, "gradient_per_site"), 291.0, 0.5);
  EXPECT_NEAR(report_value(r.out, "gradient_per_length"), 671.0, 1e-9);
  EXPECT_NEAR(report_value(r.out, "site_splitting"), 13.1, 0.05);
  const CliResult exact = cli("calibrate --exact-gamma", dir);
  ASSERT_EQ(exact.code, 0);
  EXPECT_NEAR(report_value(exact.out, "field_gradient_per_amp"), -274.0, 2.0);
}

TEST(Cli, PlanForEightAtomString) {
  const fs::path dir = scratch("plan");
  const CliResult r = cli("plan --pattern 0,17,34,51,68,85,102,119 --current 45 --out p.plan", dir);
  ASSERT_EQ(r.code, 0);
  const SequencePlan plan = load_plan((dir / "p.plan").string());
  ASSERT_EQ(plan.train.size(), 8u);
  const ApparatusConfig cfg;
  EXPECT_NO_THROW(plan.validate(cfg));
  const auto f = plan.frequencies();
  const double split = 2 * 3.141592653589793 * 671.0 * 45.0 * 0.433;
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_NEAR((f[i] - f[i - 1]) / split, 17.0, 1e-6);
}

TEST(Cli, SimulateIsByteIdenticalAcrossRunsAndWorkers) {
  const fs::path dir = scratch("simulate");
  ASSERT_EQ(cli("plan --pattern 0,2,16,18,32,34 --p-max 0.843 --sigma-omega 6400 --out pairs.plan", dir).code, 0);
  const std::string base = "simulate --shots 500 --plan pairs.plan --rho0 64e-6 --drift 10e-9 --seed 7";
  ASSERT_EQ(cli(base + " --out a", dir).code, 0);
  ASSERT_EQ(cli(base + " --out b", dir).code, 0);
  ASSERT_EQ(cli(base + " --workers 4 --out c", dir).code, 0);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.txt") continue;
    const std::string a = slurp(entry.path());
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, slurp(dir / "b" / name)) << name;
    EXPECT_EQ(a, slurp(dir / "c" / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 7u);
  const RunManifest m = parse_manifest(slurp(dir / "a" / "manifest.txt"));
  EXPECT_EQ(m.command, "simulate");
  EXPECT_EQ(m.seed, 7u);
  EXPECT_EQ(m.output_dir, "a");
}

TEST(Cli, ReplayReproducesOutputs) {
  const fs::path dir = scratch("replay");
  ASSERT_EQ(cli("plan --pattern 0,2 --p-max 0.843 --sigma-omega 6400 --out p.plan", dir).code, 0);
  ASSERT_EQ(cli("simulate --shots 40 --plan p.plan --seed 3 --out first", dir).code, 0);
  ASSERT_EQ(cli("replay first/manifest.txt --out second", dir).code, 0);
  for (const char* name : {"atoms.csv", "summary.csv", "positions.csv", "histogram.csv", "image_mean.pgm"}) {
    EXPECT_EQ(slurp(dir / "first" / name), slurp(dir / "second" / name)) << name;
  }
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  EXPECT_EQ(cli("", dir).code, 1);
  EXPECT_EQ(cli("frobnicate", dir).code, 1);
  EXPECT_EQ(cli("calibrate --bogus", dir).code, 1);
  EXPECT_EQ(cli("plan --pattern 2,1", dir).code, 1);
  EXPECT_EQ(cli("analyze deconvolve --sigma 0.2", dir).code, 2);
  EXPECT_EQ(cli("plan --pattern 0,1 --current 0", dir).code, 2);
  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "[apparatus]\ncoil_curent = 45 A\n";
  }
  const CliResult bad = cli("calibrate --config bad.cfg", dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(slurp(dir / "stderr.txt").find("coil_curent"), std::string::npos);
}

TEST(Cli, AnalyzeCommands) {
  const fs::path dir = scratch("analyze");
  const CliResult dec = cli("analyze deconvolve --sigma 0.6", dir);
  ASSERT_EQ(dec.code, 0);
  EXPECT_NE(dec.out.find("0.519"), std::string::npos) << dec.out;
  const CliResult mott = cli("mott-plane", dir);
  ASSERT_EQ(mott.code, 0);
  EXPECT_FALSE(mott.out.empty());
  const CliResult off = cli("analyze offset --synthetic-rho0 64e-6", dir);
  ASSERT_EQ(off.code, 0);
  EXPECT_FALSE(off.out.empty());
}
