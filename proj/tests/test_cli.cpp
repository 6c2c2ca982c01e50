#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omtube/cli.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace omtube;
using namespace omtube::cli;

namespace {

bool parse_args(std::vector<std::string> args, RunConfig& out) {
  args.insert(args.begin(), "omtube");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream help;
  return parse(static_cast<int>(argv.size()), argv.data(), out, help);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("omtube_test_" + name)).string();
}

std::string field_of(const std::vector<std::string>& args) {
  RunConfig c;
  try {
    parse_args(args, c);
  } catch (const UsageError& e) {
    return e.field();
  }
  return "";
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  return nlohmann::json::parse(f);
}

}  // namespace

TEST_CASE("flags parse into the config") {
  RunConfig c;
  REQUIRE(parse_args({"ratio", "--model", "euclidean", "--dim", "2", "--curve", "line:1,0", "--T", "1", "--delta",
                      "0.3,0.2,0.1", "--dt", "1e-4", "--paths", "200000", "--seed", "7", "--no-bridge"},
                     c));
  CHECK(c.subcommand == "ratio");
  CHECK(c.curve == "line:1,0");
  CHECK(c.deltas == std::vector<double>{0.3, 0.2, 0.1});
  CHECK(c.paths == 200000);
  CHECK(c.seed == 7);
  CHECK_FALSE(c.bridge);
  CHECK(make_curve(c).velocity(0.5)[0] == 1.0);
}

TEST_CASE("config round-trips through emit and --config") {
  RunConfig c;
  REQUIRE(parse_args({"couple", "--model", "sphere", "--radius", "1.25", "--delta", "0.3,0.15", "--dt", "1e-5",
                      "--field", "rotational:1,3,-2", "--lambdas", "0.1,0.2", "--strict", "--seed", "12345678901",
                      "--T", "0.3333333333333333", "--json", "out.json", "--warp-weights", "1,0.5"},
                     c));
  const std::string path = temp_path("roundtrip.ini");
  {
    std::ofstream f(path);
    f << emit(c);
  }
  RunConfig back;
  REQUIRE(parse_args({"--config", path}, back));
  CHECK(back == c);
  CHECK(emit(back) == emit(c));

  // flags override the file
  RunConfig over;
  REQUIRE(parse_args({"--config", path, "--seed", "3", "--no-strict"}, over));
  CHECK(over.seed == 3);
  CHECK_FALSE(over.strict);
  CHECK(over.deltas == c.deltas);
  std::remove(path.c_str());

  // defaults round-trip too
  RunConfig d;
  d.subcommand = "jmap-check";
  {
    std::ofstream f(path);
    f << emit(d);
  }
  RunConfig e;
  REQUIRE(parse_args({"--config", path}, e));
  CHECK(e == d);
  CHECK(emit(e) == emit(d));
  std::remove(path.c_str());
}

TEST_CASE("validation names the offending field") {
  CHECK(field_of({"nonsense"}) == "subcommand");
  CHECK(field_of({"ratio", "--T", "-1"}) == "T");
  CHECK(field_of({"ratio", "--dim", "9"}) == "dim");
  CHECK(field_of({"ratio", "--delta", "0.2", "--dt", "1e-2"}) == "dt");
  CHECK(field_of({"ratio", "--paths", "10"}) == "paths");
  CHECK(field_of({"ratio", "--curve", "line:1"}) == "curve");
  CHECK(field_of({"ratio", "--field", "linear:1,2,3"}) == "field");
  CHECK(field_of({"ratio", "--model", "torus"}) == "model");
  CHECK(field_of({"ratio", "--model", "sphere", "--delta", "1.6", "--dt", "1e-2"}) == "delta");
  CHECK(field_of({"ratio", "--model", "sphere", "--tube-radius", "1.6"}) == "tube-radius");
  CHECK(field_of({"ratio", "--delta", "0.5", "--tube-radius", "0.4", "--dt", "1e-3"}) == "delta");
  CHECK(field_of({"couple", "--dim", "1", "--dt", "1e-4"}) == "dim");
  CHECK(field_of({"ratio", "--conditioning", "magic"}) == "conditioning");
  CHECK(field_of({"ratio", "--bogus", "1"}) == "arguments");
  CHECK(field_of({"ratio", "--delta", "0.2", "--dt", "1e-2", "--allow-coarse-dt"}).empty());
}

TEST_CASE("descriptor parsing") {
  RunConfig c;
  c.dim = 2;
  c.T = 1.0;
  c.curve = "table:0:1,0;0.5:0,1;1:0,0";
  CHECK(make_curve(c).kind() == geometry::CurveSpec::Kind::table);
  c.curve = "table:0:1,0;0.5:0,1";
  CHECK_THROWS_AS(make_curve(c), UsageError);
  c.field = "table:0/-1,0,0,-1/0,0;1/-2,0,0,-2/1,0";
  CHECK(make_field(c).kind() == om::DriftField::Kind::table);
  c.field = "linear:-1,0,0,-1";
  Vec x(2);
  x << 1.0, 2.0;
  CHECK(make_field(c)(0.0, x)[1] == -2.0);
  c.field = "rotational:1,0,-2";
  CHECK(make_field(c)(0.0, x)[0] == doctest::Approx(-2.0 - 2.0 * 5.0));
  c.model = "hyperbolic";
  CHECK(make_model(c).sectional_curvature() == -1.0);
}

TEST_CASE("jmap-check artifacts") {
  RunConfig c;
  const std::string json = temp_path("jmap.json"), csv = temp_path("jmap.csv");
  REQUIRE(parse_args({"jmap-check", "--dim", "4", "--trials", "1000", "--json", json, "--csv", csv}, c));
  std::ostringstream summary;
  CHECK(run(c, summary) == ok);
  CHECK(summary.str().find("max_deviation") != std::string::npos);
  const auto j = read_json(json);
  CHECK(j["schema"] == 1);
  CHECK(j["version"] == version());
  CHECK(j["config"]["dim"] == 4);
  CHECK(j["results"][0]["max"].get<double>() < 1e-12);
  std::remove(json.c_str());
  std::remove(csv.c_str());
}

TEST_CASE("artifacts are identical across worker schedules") {
  const std::string a = temp_path("sb_a.json"), b = temp_path("sb_b.json"), dump = temp_path("sb.ndjson");
  RunConfig ca, cb;
  REQUIRE(parse_args({"smallball", "--dim", "2", "--delta", "0.5", "--T", "0.5", "--dt", "2e-3", "--paths", "4000",
                      "--json", a, "--dump", dump, "--dump-paths", "5"},
                     ca));
  REQUIRE(parse_args({"smallball", "--dim", "2", "--delta", "0.5", "--T", "0.5", "--dt", "2e-3", "--paths", "4000",
                      "--json", b, "--serial"},
                     cb));
  std::ostringstream s;
  REQUIRE(run(ca, s) == ok);
  REQUIRE(run(cb, s) == ok);
  const auto ja = read_json(a), jb = read_json(b);
  CHECK(ja["results"] == jb["results"]);
  CHECK(ja["results"][0].contains("series"));
  std::ifstream d(dump);
  std::string line;
  int lines = 0;
  while (std::getline(d, line)) ++lines;
  CHECK(lines == 5);
  for (const auto& p : {a, b, dump}) std::remove(p.c_str());
}

TEST_CASE("ratio, couple, weight and moment subcommands run") {
  std::ostringstream s;
  RunConfig c;
  const std::string json = temp_path("sub.json");
  REQUIRE(parse_args({"ratio", "--curve", "line:1,0", "--T", "0.2", "--delta", "0.5", "--dt", "1e-3", "--paths",
                      "2000", "--json", json},
                     c));
  CHECK(run(c, s) == ok);
  CHECK(read_json(json)["results"][0]["predicted"].get<double>() == doctest::Approx(std::exp(-0.1)));

  for (const char* sub : {"couple", "weight", "moment"}) {
    REQUIRE(parse_args({sub, "--model", "sphere", "--T", "0.05", "--delta", "0.3", "--dt", "1e-3", "--paths", "200",
                        "--batches", "4", "--json", json},
                       c));
    CHECK(run(c, s) == ok);
    CHECK(read_json(json)["schema"] == 1);
  }
  REQUIRE(parse_args({"expansions", "--model", "sphere", "--dim", "3", "--json", json}, c));
  CHECK(run(c, s) == ok);
  CHECK(read_json(json)["results"].size() == 3);
  std::remove(json.c_str());
}

TEST_CASE("estimation errors give a nonzero exit with partial artifacts") {
  RunConfig c;
  const std::string json = temp_path("fail.json");
  // a tiny tube under rejection leaves no survivors
  REQUIRE(parse_args({"ratio", "--curve", "line:1,0", "--T", "1", "--delta", "0.3,0.05", "--dt", "4e-5", "--paths",
                      "1000", "--conditioning", "rejection", "--json", json},
                     c));
  std::ostringstream s;
  CHECK(run(c, s) == estimation);
  const auto j = read_json(json);
  CHECK(j.contains("error"));
  std::remove(json.c_str());
}
