// Exercises the command-line tool end to end: scenario loading, metrics
// CSV, determinism, exit codes, sweep assembly, and the schedule JSON
// golden file. Invoked as: test_cli <cli-binary> <scenarios-dir> <golden-dir>
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string g_cli, g_scenarios, g_golden;

int run(const std::string& cmd) {
  int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("pipelab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string csv_field(const std::string& csv, std::size_t row,
                      std::size_t col) {
  std::stringstream ss(csv);
  std::string line;
  for (std::size_t r = 0; r <= row; ++r) REQUIRE(std::getline(ss, line));
  std::stringstream ls(line);
  std::string field;
  for (std::size_t c = 0; c <= col; ++c) REQUIRE(std::getline(ls, field, ','));
  return field;
}

}  // namespace

TEST_CASE("trivial single-device scenario simulates with zero bubble") {
  fs::path out = fresh_dir("trivial");
  int rc = run(g_cli + " simulate " + g_scenarios + "/trivial_p1.json --out " +
               out.string() + " >/dev/null 2>&1");
  CHECK(rc == 0);
  std::string csv = slurp(out / "metrics.csv");
  CHECK(csv_field(csv, 1, 10) == "0");  // bubble_fraction
}

TEST_CASE("the bundled four-device sliced scenario peaks at 14 slices") {
  fs::path out = fresh_dir("fig4");
  int rc = run(g_cli + " simulate " + g_scenarios +
               "/slim_p4_n8.json --gantt svg --out " + out.string() +
               " >/dev/null 2>&1");
  CHECK(rc == 0);
  std::string csv = slurp(out / "metrics.csv");
  CHECK(csv_field(csv, 1, 15) == "14");  // peak_activation_units_dev1
  CHECK(fs::exists(out / "timeline.json"));
  CHECK(fs::exists(out / "gantt.svg"));
}

TEST_CASE("reruns are byte-identical") {
  fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  std::string cmd = " simulate " + g_scenarios +
                    "/slim_p4_n8.json --gantt svg --out ";
  REQUIRE(run(g_cli + cmd + a.string() + " >/dev/null 2>&1") == 0);
  REQUIRE(run(g_cli + cmd + b.string() + " >/dev/null 2>&1") == 0);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "timeline.json") == slurp(b / "timeline.json"));
  CHECK(slurp(a / "gantt.svg") == slurp(b / "gantt.svg"));
}

TEST_CASE("metrics CSV header is stable") {
  fs::path out = fresh_dir("header");
  REQUIRE(run(g_cli + " simulate " + g_scenarios + "/trivial_p1.json --out " +
              out.string() + " >/dev/null 2>&1") == 0);
  std::string csv = slurp(out / "metrics.csv");
  std::string want = slurp(fs::path(g_golden) / "metrics_header.csv");
  CHECK(csv.substr(0, csv.find('\n') + 1) == want);
}

TEST_CASE("invalid configs exit with code 2") {
  fs::path out = fresh_dir("bad");
  fs::path bad = out / "bad.json";
  std::ofstream(bad) << "{\"scheme\": \"slimpipe\", \"runn\": {}}";
  CHECK(run(g_cli + " simulate " + bad.string() + " --out " + out.string() +
            " >/dev/null 2>&1") == 2);

  fs::path bad2 = out / "bad2.json";
  std::ofstream(bad2)
      << "{\"scheme\": \"1f1b\", \"parallelism\": {\"pp\": 4}, "
         "\"run\": {\"seq_len\": 8, \"microbatches\": 2, \"slices\": 1}}";
  CHECK(run(g_cli + " simulate " + bad2.string() + " --out " + out.string() +
            " >/dev/null 2>&1") == 2);
}

TEST_CASE("verify subcommand runs the suites") {
  CHECK(run(g_cli + " verify --suite balance >/dev/null 2>&1") == 0);
  CHECK(run(g_cli + " verify --suite kernel >/dev/null 2>&1") == 0);
  CHECK(run(g_cli + " verify --suite fixtures >/dev/null 2>&1") == 0);
}

TEST_CASE("one-point sweep equals the simulate row") {
  fs::path out = fresh_dir("sweep");
  fs::path grid = out / "grid.json";
  std::ofstream(grid) << "{\"base\": " << slurp(g_scenarios + "/slim_p4_n8.json")
                      << ", \"grid\": {\"n_over_p\": [2]}}";
  REQUIRE(run(g_cli + " sweep " + grid.string() + " --out " + out.string() +
              " >/dev/null 2>&1") == 0);
  fs::path single = fresh_dir("sweep_single");
  REQUIRE(run(g_cli + " simulate " + g_scenarios + "/slim_p4_n8.json --out " +
              single.string() + " >/dev/null 2>&1") == 0);
  CHECK(slurp(out / "sweep.csv") == slurp(single / "metrics.csv"));
}

TEST_CASE("sweep rows follow grid order with infeasible points skipped") {
  fs::path out = fresh_dir("sweep_grid");
  fs::path grid = out / "grid.json";
  std::ofstream(grid) << "{\"base\": " << slurp(g_scenarios + "/slim_p4_n8.json")
                      << ", \"grid\": {\"scheme\": [\"slimpipe\", \"1f1b\"], "
                         "\"p\": [2, 4], \"n_over_p\": [2]}}";
  REQUIRE(run(g_cli + " sweep " + grid.string() + " --out " + out.string() +
              " >/dev/null 2>&1") == 0);
  std::string csv = slurp(out / "sweep.csv");
  CHECK(csv_field(csv, 1, 0) == "slimpipe");
  CHECK(csv_field(csv, 1, 1) == "2");
  CHECK(csv_field(csv, 2, 0) == "slimpipe");
  CHECK(csv_field(csv, 2, 1) == "4");
  CHECK(csv_field(csv, 3, 0) == "1f1b");
}

TEST_CASE("analyze prints the closed forms") {
  fs::path out = fresh_dir("analyze");
  REQUIRE(run(g_cli + " analyze --scheme slimpipe --p 4 --m 2 --n 4 > " +
              (out / "a.csv").string() + " 2>/dev/null") == 0);
  std::string csv = slurp(out / "a.csv");
  CHECK(csv_field(csv, 1, 5) == "0.625");   // memory multiplier
  CHECK(csv_field(csv, 1, 7) == "0.375");   // bubble bound
}

TEST_CASE("exported schedule JSON matches the golden file") {
  fs::path out = fresh_dir("export");
  REQUIRE(run(g_cli + " export-schedule " + g_scenarios +
              "/trivial_p1.json --out " + (out / "sched.json").string() +
              " >/dev/null 2>&1") == 0);
  CHECK(slurp(out / "sched.json") ==
        slurp(fs::path(g_golden) / "schedule_trivial_p1.json"));
}

TEST_CASE("every bundled scenario simulates and the suites pass") {
  for (const auto& entry : fs::directory_iterator(g_scenarios)) {
    if (entry.path().extension() != ".json") continue;
    fs::path out = fresh_dir("bundled_" + entry.path().stem().string());
    INFO(entry.path().string());
    CHECK(run(g_cli + " simulate " + entry.path().string() + " --out " +
              out.string() + " >/dev/null 2>&1") == 0);
  }
}

int main(int argc, char** argv) {
  if (argc < 4) {
    std::fprintf(stderr, "usage: test_cli <cli> <scenarios-dir> <golden-dir>\n");
    return 1;
  }
  g_cli = argv[1];
  g_scenarios = argv[2];
  g_golden = argv[3];
  doctest::Context ctx;
  return ctx.run();
}
