#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "commands.hpp"
#include "config.hpp"
#include "doctest.h"
#include "json.hpp"
#include "qdtb/error.hpp"

namespace fs = std::filesystem;
using namespace qdtb;
using namespace qdtb::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Shipped config with run lengths cut down for unit-test speed.
std::string small_config() {
  std::string text = slurp(fs::path(QDTB_SOURCE_DIR) / "paper.cfg");
  const std::map<std::string, std::string> shrink{{"tomography.cycles_per_setting", "20000"},
                                                  {"tomography.mc_runs", "4"},
                                                  {"hom.cycles", "200000"},
                                                  {"autocorr.cycles", "300000"},
                                                  {"lifetime.cycles", "200000"},
                                                  {"rabi.cycles_per_point", "5000"}};
  for (const auto& [key, value] : shrink) {
    const std::regex line("(^|\\n)" + std::regex_replace(key, std::regex("\\."), "\\.") + " = [^\\n]*");
    text = std::regex_replace(text, line, "$1" + key + " = " + value);
  }
  return text;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("qdtb_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("manifest_", 0) == 0) continue;  // wall time
    files[name] = slurp(e.path());
  }
  return files;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config parsing and hashing") {
    const auto a = Config::parse("# c\nb = 2\na = x y\n\n");
    CHECK(a.text("a") == "x y");
    CHECK(a.number("b") == 2.0);
    const auto b = Config::parse("a = x y\nb = 2\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.canonical() == "a = x y\nb = 2\n");
    CHECK(Config::parse("a = 1\nb = 3\n").hash() != b.hash());
    CHECK(Config::parse("v = 1, 2.5,3").numbers("v", {}) == std::vector<double>{1.0, 2.5, 3.0});
    CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse("no equals sign\n"), ConfigError);
    try {
      (void)Config::parse("x = abc").number("x");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("'x'") != std::string::npos);
    }
    CHECK_THROWS_AS(Config::parse("k = 1").reject_unknown({"j"}), ConfigError);
  }

  TEST_CASE("every shipped key is known") {
    const auto cfg = Config::parse(slurp(fs::path(QDTB_SOURCE_DIR) / "paper.cfg"));
    std::vector<std::string> known;
    for (const auto& [k, v] : config_keys()) known.push_back(k);
    CHECK_NOTHROW(cfg.reject_unknown(known));
  }

  TEST_CASE("simulate commands are byte-identical on rerun") {
    TempDir dir("det");
    spit(dir.path / "run.cfg", small_config());
    const std::vector<std::string> subs{"tomography", "hom", "autocorr", "lifetime", "rabi"};
    for (const char* tag : {"a", "b"}) {
      for (const auto& sub : subs) {
        const auto r = run({"simulate", sub, "--config", (dir.path / "run.cfg").string(), "--out",
                            (dir.path / tag).string()});
        CHECK_MESSAGE(r.code == kExitOk, sub << ": " << r.err);
      }
    }
    const auto a = outputs(dir.path / "a"), b = outputs(dir.path / "b");
    CHECK(a.size() >= 7);
    CHECK(a == b);
    CHECK(fs::exists(dir.path / "a" / "manifest_simulate_tomography.json"));

    const auto c = run({"simulate", "tomography", "--config", (dir.path / "run.cfg").string(), "--out",
                        (dir.path / "c").string(), "--seed", "7"});
    CHECK(c.code == kExitOk);
    CHECK(slurp(dir.path / "c" / "tomography_counts.csv") != a.at("tomography_counts.csv"));
  }

  TEST_CASE("analysis chain on simulated data") {
    TempDir dir("chain");
    spit(dir.path / "run.cfg", small_config());
    const auto cfg = (dir.path / "run.cfg").string(), out = (dir.path / "o").string();
    for (const auto& sub : {"tomography", "hom", "rabi"})
      REQUIRE(run({"simulate", sub, "--config", cfg, "--out", out}).code == kExitOk);
    for (const auto& sub : {"tomo", "hom", "rabi", "budget"}) {
      const auto r = run({"analyze", sub, "--config", cfg, "--out", out});
      CHECK_MESSAGE(r.code == kExitOk, sub << ": " << r.err);
    }
    const auto tomo = nlohmann::json::parse(slurp(dir.path / "o" / "tomo_result.json"));
    CHECK(tomo.contains("config_hash"));
    CHECK(tomo["results"][0]["converged"].get<bool>());
    const auto budget = nlohmann::json::parse(slurp(dir.path / "o" / "budget_ledger.json"));
    CHECK(budget["channels"]["xx"]["eta_first_lens"].get<double>() == doctest::Approx(61000.0 / 390000.0));
  }

  TEST_CASE("missing seed exits 2") {
    TempDir dir("seed");
    std::string text = small_config();
    text = std::regex_replace(text, std::regex("(^|\\n)seed = [^\\n]*"), "$1");
    spit(dir.path / "run.cfg", text);
    const auto r = run({"simulate", "rabi", "--config", (dir.path / "run.cfg").string(), "--out",
                        (dir.path / "o").string()});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("seed") != std::string::npos);
    const auto ok = run({"simulate", "rabi", "--config", (dir.path / "run.cfg").string(), "--out",
                         (dir.path / "o").string(), "--seed", "3"});
    CHECK(ok.code == kExitOk);
  }

  TEST_CASE("unknown key and bad values exit 2") {
    TempDir dir("keys");
    spit(dir.path / "a.cfg", small_config() + "\nhom.typo = 1\n");
    auto r = run({"simulate", "hom", "--config", (dir.path / "a.cfg").string(), "--out", (dir.path / "o").string()});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("hom.typo") != std::string::npos);
    spit(dir.path / "b.cfg", std::regex_replace(small_config(), std::regex("hom.cycles = [^\\n]*"), "hom.cycles = -4"));
    r = run({"simulate", "hom", "--config", (dir.path / "b.cfg").string(), "--out", (dir.path / "o").string()});
    CHECK(r.code == kExitConfig);
    r = run({"simulate", "hom", "--config", (dir.path / "none.cfg").string()});
    CHECK(r.code == kExitConfig);
    r = run({"simulate", "nothing", "--config", (dir.path / "a.cfg").string()});
    CHECK(r.code == kExitConfig);
  }

  TEST_CASE("malformed CSV exits 3 naming the line and leaves no output") {
    TempDir dir("csv");
    spit(dir.path / "run.cfg", small_config());
    spit(dir.path / "bad.csv", "# acquisition_cycles=100\n# efficiency_product=0.5\nxx_proj,x_proj,count\nE,E,1\nE,L,x\n");
    const auto r = run({"analyze", "tomo", "--config", (dir.path / "run.cfg").string(), "--out",
                        (dir.path / "o").string(), "--input", (dir.path / "bad.csv").string()});
    CHECK(r.code == kExitData);
    CHECK(r.err.find("line 5") != std::string::npos);
    CHECK(r.err.find("bad.csv") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path / "o" / "tomo_result.json"));
    const auto missing = run({"analyze", "g2", "--config", (dir.path / "run.cfg").string(), "--out",
                              (dir.path / "o").string(), "--input", (dir.path / "absent.csv").string()});
    CHECK(missing.code == kExitData);
  }

  TEST_CASE("help and version") {
    CHECK(run({"--help"}).code == kExitOk);
    const auto v = run({"--version"});
    CHECK(v.code == kExitOk);
    CHECK(v.out.find("qdtb") != std::string::npos);
  }
}
