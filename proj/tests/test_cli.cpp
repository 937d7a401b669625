#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "opcomp/cli.hpp"
#include "opcomp/error.hpp"
#include "opcomp/parallel.hpp"

using namespace opcomp;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path root;
  explicit Scratch(const std::string& name) : root(fs::temp_directory_path() / ("opcomp-cli-" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
  fs::path write(const std::string& name, const std::string& content) const {
    std::ofstream(root / name) << content;
    return root / name;
  }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path only_child(const fs::path& dir) {
  std::vector<fs::path> children(fs::directory_iterator(dir), fs::directory_iterator{});
  REQUIRE(children.size() == 1);
  return children.front();
}

}  // namespace

TEST_CASE("scaling-constant prints the closed-form value and writes every output") {
  Scratch s("scaling");
  const Run r = run({"scaling-constant", "--k", "1", "--s", "1", "--d", "1", "--delta", "1", "--resolution", "1024",
                     "--outdir", s.root.string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("3.46") != std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
  const fs::path dir = only_child(s.root / "scaling-constant");
  const std::string hash = dir.filename().string();
  CHECK(hash.size() == 16);

  std::istringstream csv(slurp(dir / "report.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "config_hash,k,s,d,shape,delta,unknowns,value,reference");
  while (std::getline(csv, line)) CHECK(line.rfind(hash + ",", 0) == 0);

  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["passed"] == true);
  CHECK(summary["config_hash"] == hash);
  CHECK(summary["config"]["resolution"]["source"] == "flag");
  CHECK(fs::exists(dir / "config.ini"));
}

TEST_CASE("exit codes distinguish usage, errors and failed assertions") {
  Scratch s("codes");
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"scaling-constant", "--no-such-flag", "1"}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);

  const Run bad = run({"poincare-rates", "--levels", "5..3", "--outdir", s.root.string()});
  CHECK(bad.code == cli::kExitError);
  CHECK(bad.err.find("levels") != std::string::npos);

  // an impossible tolerance fails the assertion but still leaves the report
  const Run strict = run({"scaling-constant", "--resolution", "64", "--tolerance", "1e-30", "--outdir", s.root.string()});
  CHECK(strict.code == cli::kExitAssertion);
  CHECK(strict.out.find("FAIL") != std::string::npos);
  CHECK(fs::exists(only_child(s.root / "scaling-constant") / "report.csv"));
}

TEST_CASE("config files: defaults, file values, flag precedence and unknown keys") {
  Scratch s("config");
  const auto empty = cli::load_config("msfem-beam", s.write("empty.ini", ""), {});
  CHECK(empty.get("seed") == "7");
  CHECK(empty.settings.at("seed").source == "default");

  const fs::path file = s.write("seed.ini", "# comment\nseed = 42\n[msfem-beam]\nfine = 256 ; inline\n");
  const auto from_file = cli::load_config("msfem-beam", file, {});
  CHECK(from_file.seed("seed") == 42);
  CHECK(from_file.integer("fine") == 256);

  const auto flagged = cli::load_config("msfem-beam", file, {{"seed", "7"}});
  CHECK(flagged.seed("seed") == 7);
  CHECK(flagged.settings.at("seed").source == "flag");
  CHECK(flagged.settings.at("seed").file_value == "42");
  std::ostringstream ini;
  flagged.write_ini(ini);
  CHECK(ini.str().find("# file value: seed = 42") != std::string::npos);
  CHECK(ini.str().find("seed = 7") != std::string::npos);

  const fs::path bad = s.write("bad.ini", "sed = 1\n[decay-plate]\nfoo = 2\n[nowhere]\n");
  try {
    cli::load_config("msfem-beam", bad, {});
    FAIL("unknown keys were accepted");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(what.find("sed") != std::string::npos);
    CHECK(what.find("decay-plate.foo") != std::string::npos);
    CHECK(what.find("[nowhere]") != std::string::npos);
  }
  CHECK_THROWS_AS(cli::load_config("msfem-beam", s.root / "missing.ini", {}), Error);
  std::istringstream malformed("just words\n");
  CHECK_THROWS_AS(cli::parse_ini(malformed), Error);
}

TEST_CASE("end to end: an empty config file runs with defaults and echoes them") {
  Scratch s("echo");
  const fs::path file = s.write("empty.ini", "");
  const Run r = run({"poincare-rates", "--config", file.string(), "--outdir", s.root.string()});
  CHECK(r.code == cli::kExitOk);
  const std::string echo = slurp(only_child(s.root / "poincare-rates") / "config.ini");
  CHECK(echo.find("pairs = 1:0,2:0,2:1  # default") != std::string::npos);
}

TEST_CASE("hash ignores output location and thread count") {
  const auto a = cli::load_config("decay-plate", std::nullopt, {{"outdir", "x"}, {"threads", "1"}});
  const auto b = cli::load_config("decay-plate", std::nullopt, {{"outdir", "y"}, {"threads", "3"}});
  const auto c = cli::load_config("decay-plate", std::nullopt, {{"seed", "12"}});
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("identical configs give byte-identical csv regardless of threads") {
  Scratch s("repro");
  const std::string base = (s.root / "a").string(), other = (s.root / "b").string();
  REQUIRE(run({"decay-plate", "--threads", "1", "--outdir", base}).code == 0);
  REQUIRE(run({"decay-plate", "--threads", "2", "--outdir", other}).code == 0);
  const fs::path da = only_child(fs::path(base) / "decay-plate"), db = only_child(fs::path(other) / "decay-plate");
  CHECK(da.filename() == db.filename());
  CHECK(slurp(da / "report.csv") == slurp(db / "report.csv"));
  CHECK(fs::exists(da / "tails.svg"));
}

TEST_CASE("threads fall back to the environment") {
  Scratch s("threads");
  ::setenv("OPCOMP_THREADS", "3", 1);
  CHECK(run({"scaling-constant", "--resolution", "64", "--outdir", s.root.string()}).code == 0);
  CHECK(thread_limit().load() == 3);
  CHECK(run({"scaling-constant", "--resolution", "64", "--threads", "2", "--outdir", s.root.string()}).code == 0);
  CHECK(thread_limit().load() == 2);
  ::unsetenv("OPCOMP_THREADS");
  set_thread_limit(1);
}

TEST_CASE("level, schedule and hash helpers") {
  CHECK(cli::parse_levels("0..3") == std::vector<Index>{1, 2, 4, 8});
  CHECK(cli::parse_levels("3, 5") == std::vector<Index>{8, 32});
  CHECK_THROWS_AS(cli::parse_levels("4..2"), Error);
  CHECK_THROWS_AS(cli::parse_levels("x"), Error);

  const auto s = cli::parse_schedules("global, log2:2.4,linear:3");
  REQUIRE(s.size() == 3);
  CHECK_FALSE(s[0].localized);
  CHECK(s[1].schedule == RadiusSchedule::Log2);
  CHECK(s[1].c == doctest::Approx(2.4));
  CHECK(s[2].label() == "linear:3");
  CHECK_THROWS_AS(cli::parse_schedules("cubic:2"), Error);
  CHECK_THROWS_AS(cli::parse_schedules("log2:-1"), Error);

  // published FNV-1a 64 test vectors
  CHECK(cli::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(cli::fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(cli::fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("basis-export writes sampled members with the hash on every row") {
  Scratch s("export");
  const Run r = run({"basis-export", "--problem", "robin-1d", "--coarse", "8", "--fine", "256", "--samples", "33",
                     "--outdir", s.root.string()});
  CHECK(r.code == 0);
  const fs::path dir = only_child(s.root / "basis-export");
  std::istringstream csv(slurp(dir / "report.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "config_hash,function,patch,member,x,y,value");
  int rows = 0;
  while (std::getline(csv, line)) {
    CHECK(line.rfind(dir.filename().string() + ",", 0) == 0);
    ++rows;
  }
  CHECK(rows == 2 * 33);
  CHECK(fs::exists(dir / "psi.svg"));
  CHECK(fs::exists(dir / "psi_q_0.dat"));
}
