#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gds/dmft.hpp"
#include "gds/errors.hpp"
#include "gds/io.hpp"
#include "json.hpp"

using namespace gds;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "gds_io_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("config parsing") {
  const KvConfig cfg = KvConfig::parse_string(
      "# run settings\n"
      "\n"
      "delta = 6.5\n"
      "steps=12\n"
      "  label = warm start  \n"
      "use_pool = yes\n"
      "grid = 1, 2.5, 4\n"
      "seed = 18446744073709551615\n");
  CHECK(cfg.has("delta"));
  CHECK_FALSE(cfg.has("missing"));
  CHECK(cfg.get_double("delta", 0.0) == 6.5);
  CHECK(cfg.get_int("steps", 0) == 12);
  CHECK(cfg.get_str("label", "") == "warm start");
  CHECK(cfg.get_bool("use_pool", false));
  CHECK(cfg.get_u64("seed", 0) == 18446744073709551615ull);
  const std::vector<double> grid = cfg.get_list("grid", {});
  REQUIRE(grid.size() == 3);
  CHECK(grid[1] == 2.5);
  CHECK(cfg.get_double("missing", -1.5) == -1.5);
  CHECK(cfg.get_bool("missing", true));
  CHECK(cfg.get_list("missing", {7.0}).at(0) == 7.0);

  CHECK_THROWS_AS(KvConfig::parse_string("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("just a line\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("= 3\n"), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("delta", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("label", 0.0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("delta", false), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("g = 1,,2\n").get_list("g", {}),
                  ConfigError);
  CHECK_THROWS_AS(cfg.require_known({"delta", "steps"}), ConfigError);
  const std::vector<std::string> all = {"delta", "steps",    "label",
                                        "use_pool", "grid",  "seed"};
  CHECK_NOTHROW(cfg.require_known(all));

  KvConfig renamed = cfg;
  renamed.set("alias", renamed.get_str("label", ""));
  renamed.erase("label");
  CHECK(!renamed.has("label"));
  CHECK(renamed.get_str("alias", "") == cfg.get_str("label", ""));
  CHECK_THROWS_AS(renamed.require_known(all), ConfigError);
}

TEST_CASE("config file loading") {
  TempDir tmp;
  {
    std::ofstream out(tmp.file("run.cfg"));
    out << "alpha = 1\n# comment\nbeta = two words\n";
  }
  const KvConfig cfg = KvConfig::parse_file(tmp.file("run.cfg"));
  CHECK(cfg.get_int("alpha", 0) == 1);
  CHECK(cfg.get_str("beta", "") == "two words");
  CHECK_THROWS_AS(KvConfig::parse_file(tmp.file("absent.cfg")), ConfigError);
}

TEST_CASE("round trip number formatting") {
  const std::vector<double> values = {0.0,
                                      -0.0,
                                      1.0 / 3.0,
                                      6.02e23,
                                      -1.7976931348623157e308,
                                      5e-324,
                                      0.1,
                                      123456789.123456789};
  for (double v : values) {
    const std::string s = format_double(v);
    // strtod instead of stod: stod throws on subnormals in libstdc++
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(std::memcmp(&back, &v, sizeof(double)) == 0);
  }
}

TEST_CASE("csv emission") {
  TempDir tmp;
  const std::string path = tmp.file("table.csv");
  {
    CsvWriter csv(path, {"t", "value"});
    csv.row({"0", "ok"});
    csv.row_values({1.0, 0.5});
    CHECK_THROWS_AS(csv.row({"too", "many", "cells"}), ConfigError);
    csv.close();
  }
  CHECK(slurp(path) == "t,value\n0,ok\n1,0.5\n");
}

TEST_CASE("file digests are content addressed") {
  TempDir tmp;
  const std::string a = tmp.file("a.bin");
  const std::string b = tmp.file("b.bin");
  const std::string c = tmp.file("c.bin");
  std::ofstream(a, std::ios::binary) << "";
  std::ofstream(b, std::ios::binary) << "payload";
  std::ofstream(c, std::ios::binary) << "payload";
  // offset basis of the 64-bit FNV-1a hash
  CHECK(file_digest(a) == "fnv1a64:cbf29ce484222325");
  CHECK(file_digest(b) == file_digest(c));
  CHECK(file_digest(b) != file_digest(a));
  CHECK(file_digest(b).rfind("fnv1a64:", 0) == 0);
  CHECK(file_digest(b).size() == 8 + 16);
  CHECK_THROWS_AS(file_digest(tmp.file("absent.bin")), ConfigError);
}

TEST_CASE("manifest serialization") {
  TempDir tmp;
  RunManifest man;
  man.command = "dmft";
  man.seed = 42;
  man.workers = 3;
  man.paper_scale = true;
  man.config["delta"] = "6";
  man.config["eta"] = "1.5";
  man.wall_seconds = 1.25;
  man.outputs.push_back({"kernels.json", "fnv1a64:0011223344556677"});
  const std::string path = tmp.file("manifest.json");
  write_manifest(path, man);

  nlohmann::json j = nlohmann::json::parse(slurp(path));
  CHECK(j.at("version").get<std::string>() == kVersionTag);
  CHECK(j.at("command").get<std::string>() == "dmft");
  CHECK(j.at("seed").get<std::uint64_t>() == 42);
  CHECK(j.at("workers").get<int>() == 3);
  CHECK(j.at("paper_scale").get<bool>());
  CHECK(j.at("config").at("delta").get<std::string>() == "6");
  CHECK(j.at("outputs").size() == 1);
  CHECK(j.at("outputs")[0].at("path").get<std::string>() == "kernels.json");
}

TEST_CASE("kernel container round trip") {
  TempDir tmp;
  DmftConfig cfg;
  cfg.n_paths = 1000;
  cfg.seed = 9;
  DmftScalar engine(cfg);
  engine.run_to(2);
  const DmftKernels k = engine.kernels();
  const std::string path = tmp.file("kernels.json");
  save_kernels(path, k, cfg.seed, cfg.n_paths);

  std::uint64_t seed = 0;
  int n_paths = 0;
  const DmftKernels back = load_kernels(path, &seed, &n_paths);
  CHECK(seed == 9);
  CHECK(n_paths == 1000);
  CHECK(back.T == k.T);
  CHECK(back.m == k.m);
  CHECK(back.k == k.k);
  CHECK(back.delta == k.delta);
  CHECK(back.eta == k.eta);
  CHECK((back.c_theta - k.c_theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.c_theta_star - k.c_theta_star).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.c_ell - k.c_ell).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.r_theta - k.r_theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.r_ell - k.r_ell).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.r_ell_star - k.r_ell_star).cwiseAbs().maxCoeff() == 0.0);

  const std::string bad = tmp.file("bad.json");
  std::ofstream(bad) << "{\"kind\": \"something_else\", \"T\": 1}";
  CHECK_THROWS_AS(load_kernels(bad), ConfigError);
  const std::string broken = tmp.file("broken.json");
  std::ofstream(broken) << "{ not json";
  CHECK_THROWS_AS(load_kernels(broken), ConfigError);
  CHECK_THROWS_AS(load_kernels(tmp.file("absent.json")), ConfigError);
}

}  // TEST_SUITE
