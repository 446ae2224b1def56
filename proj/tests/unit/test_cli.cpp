#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <string>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "support.hpp"

using namespace qdr;
using Catch::Matchers::ContainsSubstring;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run qdr_cli(const test::TempDir& dir, const std::string& args) {
  const auto out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = std::string(QDR_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = test::read_file(out);
  r.err = test::read_file(err);
  return r;
}

std::string generate_ex1(const test::TempDir& dir, std::size_t n = 600) {
  const auto path = dir.file("ex1.csv");
  const auto r = qdr_cli(dir, "generate --example ex1 --n " + std::to_string(n) + " --seed 3 --set path=" + path);
  REQUIRE(r.code == 0);
  return path;
}

std::string fit_config(const test::TempDir& dir, const std::string& data) {
  const auto cfg = dir.file("fit.json");
  test::write_file(cfg, R"({
  // one-stage fit
  "seed": 11,
  "fit": {
    "data": {"path": ")" + data + R"(", "default_pscore": 0.5},
    "tau": 0.5,
    "search": {"lower": [-3], "upper": [3], "generations": 40}
  }
})");
  return cfg;
}

}  // namespace

TEST_CASE("config with two command sections exits 2 naming both", "[cli]") {
  test::TempDir dir;
  const auto cfg = dir.file("two.json");
  test::write_file(cfg, R"({"fit": {}, "truth": {}})");
  const auto r = qdr_cli(dir, "fit -c " + cfg);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("fit") && ContainsSubstring("truth") && ContainsSubstring("multiple"));
}

TEST_CASE("validation lists every problem before exiting", "[cli]") {
  test::TempDir dir;
  const auto cfg = dir.file("bad.json");
  test::write_file(cfg, R"({"fit": {"data": {"path": "/nonexistent.csv"}, "tau": 1.5, "bogus": 1,
                               "censoring": {"model": "cox"}}})");
  const auto r = qdr_cli(dir, "fit -c " + cfg);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("4 problem(s)"));
  CHECK_THAT(r.err, ContainsSubstring("fit.data.path"));
  CHECK_THAT(r.err, ContainsSubstring("fit.tau"));
  CHECK_THAT(r.err, ContainsSubstring("fit.bogus is not a recognized setting"));
  CHECK_THAT(r.err, ContainsSubstring("fit.censoring.model"));
}

TEST_CASE("repeated fit with the same seed is byte-identical", "[cli]") {
  test::TempDir dir;
  const auto data = generate_ex1(dir);
  const auto cfg = fit_config(dir, data);
  const auto a = qdr_cli(dir, "fit -c " + cfg + " -o " + dir.file("a.json"));
  const auto b = qdr_cli(dir, "fit -c " + cfg + " -o " + dir.file("b.json") + " --threads 2");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto ja = json::parse(test::read_file(dir.file("a.json")));
  auto jb = json::parse(test::read_file(dir.file("b.json")));
  CHECK(ja["result"] == jb["result"]);
  // Same output path on a rerun: the whole file, config echo included, repeats.
  const auto first = test::read_file(dir.file("a.json"));
  const auto c = qdr_cli(dir, "fit -c " + cfg + " -o " + dir.file("a.json"));
  REQUIRE(c.code == 0);
  CHECK(test::read_file(dir.file("a.json")) == first);
  CHECK_THAT(a.out, ContainsSubstring("fit: rule"));

  CHECK(ja["schema_version"] == 1);
  CHECK(ja["command"] == "fit");
  CHECK(ja["config"]["seed"] == 11);
  CHECK(!ja.contains("timing"));
  CHECK(ja["result"]["rule"]["sign"] == 1);
}

TEST_CASE("value of the fitted rule equals the fit report's value", "[cli]") {
  test::TempDir dir;
  const auto data = generate_ex1(dir);
  const auto fit = qdr_cli(dir, "fit -c " + fit_config(dir, data));
  REQUIRE(fit.code == 0);
  const auto jf = json::parse(fit.out);
  const auto& rule = jf["result"]["rule"];
  const auto cfg = dir.file("value.json");
  json v{{"value", {{"data", {{"path", data}, {"default_pscore", 0.5}}},
                    {"tau", 0.5},
                    {"rule", {{"sign", rule["sign"]}, {"tail", rule["tail"]}}}}}};
  test::write_file(cfg, v.dump());
  const auto r = qdr_cli(dir, "value -c " + cfg);
  REQUIRE(r.code == 0);
  const auto jv = json::parse(r.out);
  CHECK(jv["result"]["q_hat"] == jf["result"]["value"]);
}

TEST_CASE("flags override the config and --timing adds phase times", "[cli]") {
  test::TempDir dir;
  const auto data = generate_ex1(dir);
  const auto r = qdr_cli(dir, "fit -c " + fit_config(dir, data) + " --tau 0.25 --timing");
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["config"]["fit"]["tau"] == 0.25);
  CHECK(j["result"]["tau"] == 0.25);
  CHECK(j.contains("timing"));
}

TEST_CASE("fit-dynamic requires pi1 and reports row-level data errors", "[cli]") {
  test::TempDir dir;
  const auto path = dir.file("dyn.csv");
  test::write_file(path,
                   "x1_1,x1_2,d1,z,x2_1,d2,y,delta\n"
                   "0.5,1,0,0,,,0.6,1\n"
                   "0.5,1,1,0,,,1.7,1\n");
  const auto cfg = dir.file("dyn.json");
  test::write_file(cfg, R"({"fit_dynamic": {"data": {"path": ")" + path + R"(", "s": 1.0, "pi2": 0.5}}})");
  auto r = qdr_cli(dir, "fit-dynamic -c " + cfg);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("fit_dynamic.data.pi1 is required"));

  test::write_file(cfg, R"({"fit_dynamic": {"data": {"path": ")" + path + R"(", "s": 1.0, "pi1": 0.5, "pi2": 0.5}}})");
  r = qdr_cli(dir, "fit-dynamic -c " + cfg);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("row 2: y > s with z=0"));
}

TEST_CASE("simulate emits one row per replication", "[cli]") {
  test::TempDir dir;
  const auto table = dir.file("sim.csv");
  const auto r = qdr_cli(dir, "simulate --example ex1 --n 200 --reps 3 --method new --tau 0.5 --set replications_table=" +
                                  table + " --set search.generations=20");
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["result"]["methods"]["new"]["replications"].size() == 3);
  const auto csv = test::read_file(table);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
}

TEST_CASE("unknown command-line option exits 2", "[cli]") {
  test::TempDir dir;
  CHECK(qdr_cli(dir, "fit --no-such-flag").code == 2);
  CHECK(qdr_cli(dir, "").code == 2);
}
