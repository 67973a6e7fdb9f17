#include "modeswitch/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "modeswitch/config.hpp"

namespace modeswitch {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t columns(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("modeswitch_pipeline_test_" + name);
  fs::remove_all(dir);
  return dir;
}

// Example 1 at a coarse resolution, without the expensive oracle and simulation stages.
RunSpec small_example_one() {
  RunSpec s = load_config(std::string(MODESWITCH_CONFIG_DIR) + "/example1.conf");
  s.grid.n_nodes = 201;
  s.oracle.enabled = false;
  s.strategy.enabled = false;
  s.output.emit_plots = false;
  return s;
}

TEST(ValuesCsv, ShapeOnFiveNodeGrid) {
  const Grid g = build_grid(0.0, 1.0, 5, Spacing::Uniform);
  ValueField f(g, 2, 1.5);
  SwitchingRegions regions(g, 2);
  regions.set_target(0, 3, 1);
  const auto rows = lines_of(values_csv(f, regions));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "x,v1,v2,best_target_1,best_target_2");
  for (const auto& r : rows) EXPECT_EQ(columns(r), 5u) << r;
  EXPECT_EQ(rows[1], "0,1.5,1.5,0,0");
  EXPECT_EQ(rows[4], "0.75,1.5,1.5,2,0");
}

TEST(ValuesCsv, AllContinueGivesZeroTargets) {
  const Grid g = build_grid(-1.0, 1.0, 9, Spacing::Uniform);
  const ValueField f(g, 3, 0.25);
  const SwitchingRegions regions(g, 3);
  const auto rows = lines_of(values_csv(f, regions));
  EXPECT_EQ(rows[0], "x,v1,v2,v3,best_target_1,best_target_2,best_target_3");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].substr(rows[k].size() - 6), ",0,0,0") << rows[k];
  }
  EXPECT_EQ(lines_of(regions_csv(regions)).size(), 1u);
}

TEST(Fmt, TwelveSignificantDigits) {
  EXPECT_EQ(fmt(0.1), "0.1");
  EXPECT_EQ(fmt(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(fmt(1e-20), "1e-20");
}

TEST(Run, ExampleOneSucceedsAndWritesArtifacts) {
  const auto dir = scratch("e1");
  RunSpec s = small_example_one();
  s.output.emit_plots = true;
  const auto outcome = run(s, dir);
  EXPECT_EQ(outcome.exit_code, kExitOk);
  EXPECT_TRUE(outcome.failures.empty());
  for (const char* f : {"values.csv", "regions.csv", "report.txt", "plot.gp"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto rows = lines_of(slurp(dir / "values.csv"));
  EXPECT_EQ(rows.size(), 202u);
  EXPECT_EQ(columns(rows[0]), 5u);
  const auto report = slurp(dir / "report.txt");
  EXPECT_NE(report.find("status: OK"), std::string::npos) << report;
  EXPECT_NE(report.find("H4"), std::string::npos);
}

TEST(Run, ExampleTwoColumns) {
  RunSpec s = load_config(std::string(MODESWITCH_CONFIG_DIR) + "/example2.conf");
  s.grid.n_nodes = 601;
  s.oracle.enabled = false;
  s.strategy.enabled = false;
  const auto dir = scratch("e2");
  EXPECT_EQ(run(s, dir).exit_code, kExitOk);
  const auto rows = lines_of(slurp(dir / "values.csv"));
  EXPECT_EQ(rows[0], "x,v1,v2,v3,best_target_1,best_target_2,best_target_3");
  EXPECT_GT(lines_of(slurp(dir / "regions.csv")).size(), 1u);
}

TEST(Run, ViolatedGrowthConditionExitsWithValidationCode) {
  const auto spec = load_config(std::string(MODESWITCH_CONFIG_DIR) + "/h4_violation.conf");
  const auto dir = scratch("h4");
  const auto outcome = run(spec, dir);
  EXPECT_EQ(outcome.exit_code, kExitValidation);
  const auto report = slurp(dir / "report.txt");
  EXPECT_NE(report.find("H4: FAILED"), std::string::npos) << report;
  EXPECT_FALSE(fs::exists(dir / "values.csv"));
}

TEST(Run, OuterIterationCapExitsWithNonconvergence) {
  RunSpec s = small_example_one();
  s.solver.scheme = Scheme::Picard;
  s.solver.solve.max_outer = 1;
  const auto dir = scratch("cap");
  EXPECT_EQ(run(s, dir).exit_code, kExitNonconverged);
  EXPECT_NE(slurp(dir / "report.txt").find("NONCONVERGED"), std::string::npos);
}

TEST(Run, ImpossibleResidualToleranceExitsWithCheckFailure) {
  RunSpec s = small_example_one();
  s.solver.residual_tol = 0.0;
  s.solver.violation_tol = -1.0;
  const auto outcome = run(s, scratch("chk"));
  EXPECT_EQ(outcome.exit_code, kExitCheckFail);
  EXPECT_FALSE(outcome.failures.empty());
}

TEST(Run, ArtifactsAreByteIdenticalAcrossRuns) {
  RunSpec s = small_example_one();
  s.strategy.enabled = true;
  s.strategy.n_paths = 2000;
  s.strategy.dt = 1e-3;
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  ASSERT_EQ(run(s, a).exit_code, run(s, b).exit_code);
  for (const char* f : {"values.csv", "regions.csv", "report.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

}  // namespace
}  // namespace modeswitch
