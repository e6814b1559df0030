#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "starkstrip/cli.hpp"

using namespace starkstrip;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) {
  std::vector<const char*> argv{"starkstrip"};
  for (auto& a : args) argv.push_back(a.c_str());
  return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("starkstrip_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config file round trip; unknown keys rejected") {
  LatticeConfig cfg = LatticeConfig::make(3, 7, 1.5, 0.33, 12,
                                          BoundaryX::Periodic, 5);
  auto text = serialize_config(cfg);
  auto back = parse_config(text);
  CHECK(back == cfg);

  CHECK_THROWS_AS(parse_config("alpha=1/10\nJ=1\nfoo=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("J=1\n"), ConfigError);  // alpha missing
  CHECK_THROWS_AS(parse_config("alpha=banana\n"), ConfigError);
  auto [r, q] = parse_alpha("4/10");
  CHECK(r == 4);
  CHECK(q == 10);
}

TEST_CASE("expression sugar resolves caption parameters") {
  ExprContext ctx;
  ctx.J = 1.0;
  ctx.alpha = 0.1;
  ctx.F = 0.02;
  CHECK(eval_expression("-2J+wc/2", ctx) ==
        doctest::Approx(-1.6858407346410207).epsilon(1e-15));
  CHECK(eval_expression("400Tc", ctx) == doctest::Approx(4000.0));
  CHECK(eval_expression("2*pi/F", ctx) ==
        doctest::Approx(314.15926535897933));
  CHECK(eval_expression("200TB", ctx) ==
        doctest::Approx(200 * 2 * pi / 0.02));
  CHECK(eval_expression("(1+2)*3 - 0.5", ctx) == doctest::Approx(8.5));
  CHECK(eval_expression("Fcr", ctx) ==
        doctest::Approx(0.6283185307179586));
  CHECK_THROWS_AS(eval_expression("2J+", ctx), ConfigError);
  CHECK_THROWS_AS(eval_expression("nope", ctx), ConfigError);
  ExprContext no_field;
  CHECK_THROWS_AS(eval_expression("TB", no_field), ConfigError);
}

TEST_CASE("figure recipes carry the caption parameters") {
  CHECK(cli::find_recipe("fig4").params.at("Lx") == "10");
  CHECK(cli::find_recipe("fig2").params.at("EK") == "-2J+wc/2");
  CHECK(cli::find_recipe("fig2").params.at("F") == "0.02");
  CHECK(cli::find_recipe("fig5").params.at("checkpoints")
            .find("400TB") != std::string::npos);
  CHECK(cli::find_recipe("fig1").params.at("Lx") == "40");
  CHECK(cli::find_recipe("fig3").params.at("F") == "0.02");
  CHECK_THROWS_AS(cli::find_recipe("fig9"), ConfigError);
}

TEST_CASE("17-digit formatting round-trips doubles") {
  SplitMix64 rng(5);
  for (int i = 0; i < 200; ++i) {
    double v = std::exp(20.0 * rng.symmetric()) * rng.symmetric();
    CHECK(std::stod(fmt_g17(v)) == v);
  }
}

TEST_CASE("manifest records outputs with content hashes") {
  TempDir dir("manifest");
  RunManifest man("demo", 7);
  man.set_param("alpha", "1/10");
  man.write_file((dir.path / "a.csv").string(), "x,y\n1,2\n");
  man.write((dir.path / "manifest.json").string());
  auto j = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
  CHECK(j["subcommand"] == "demo");
  CHECK(j["outputs"].size() == 1);
  CHECK(j["outputs"][0]["fnv1a64"] == hash_hex("x,y\n1,2\n"));
  CHECK(j["parameters"]["alpha"] == "1/10");
}

TEST_CASE("state records serialize the documented grid layout") {
  auto cfg = LatticeConfig::make(1, 5, 1.0, 0.5, 4, BoundaryX::Dirichlet);
  LandauStarkState st;
  st.psi = WaveFunction(cfg);
  st.psi.at(cfg.l_min(), cfg.m_min) = cxd(0.25, -0.5);
  st.psi.at(cfg.l_min() + 1, cfg.m_min + 2) = 1.0;
  st.nu = 3;
  st.ladder_index = -1;
  st.energy = 0.125;
  auto j = nlohmann::json::parse(state_record(st));
  CHECK(j["nu"] == 3);
  CHECK(j["n"] == -1);
  CHECK(j["grid_dims"][0] == 4);
  CHECK(j["grid_dims"][1] == cfg.ny());
  // y varies fastest: flat index = (l - l_min) * ny + (m - m_min)
  CHECK(j["amplitudes_re"][0] == 0.25);
  CHECK(j["amplitudes_im"][0] == -0.5);
  CHECK(j["amplitudes_re"][cfg.ny() + 2] == 1.0);
}

TEST_CASE("bands subcommand: deterministic output, thread independent") {
  TempDir d1("cli1"), d2("cli2");
  CHECK(run({"bands", "--alpha", "1/10", "--J", "1", "--kappas", "64",
             "--out", d1.path.string(), "--threads", "1"}) == 0);
  CHECK(run({"bands", "--alpha", "1/10", "--J", "1", "--kappas", "64",
             "--out", d2.path.string(), "--threads", "2"}) == 0);
  CHECK(slurp(d1.path / "bands.csv") == slurp(d2.path / "bands.csv"));
  CHECK(slurp(d1.path / "manifest.json") == slurp(d2.path / "manifest.json"));

  // ten bands in the csv
  auto text = slurp(d1.path / "bands.csv");
  CHECK(text.find("\n") != std::string::npos);
  int count = 0;
  for (size_t pos = 0; (pos = text.find(",9,", pos)) != std::string::npos;
       ++pos)
    ++count;
  CHECK(count == 64);  // highest band index appears once per kappa
}

TEST_CASE("exit codes: config error 2, usage error 64") {
  TempDir dir("exitcodes");
  CHECK(run({"bands", "--alpha", "banana", "--out", dir.path.string()}) == 2);
  CHECK(run({"bands", "--bogus-flag", "1"}) == 64);
  CHECK(run({"nonexistent-subcommand"}) == 64);
  // window too small for the field
  CHECK(run({"lss", "--alpha", "1/10", "--J", "1", "--F", "0.02", "--Lx",
             "8", "--ymin", "-5", "--ymax", "5", "--out",
             dir.path.string()}) == 2);
}

TEST_CASE("ladder and floquet subcommands produce self-consistent files") {
  TempDir dir("ladder");
  CHECK(run({"ladder", "--alpha", "1/5", "--J", "1", "--F", "0.25",
             "--kappa", "0.4", "--center", "0", "--halfwidth", "0.6",
             "--out", dir.path.string()}) == 0);
  auto text = slurp(dir.path / "ladder.csv");
  CHECK(text.rfind("kappa,energy,slope,transporting,residual", 0) == 0);

  TempDir dir2("floquet");
  CHECK(run({"floquet", "--alpha", "1/5", "--J", "1", "--F", "0.25", "--Lx",
             "6", "--kappas", "16", "--out", dir2.path.string()}) == 0);
  auto j = nlohmann::json::parse(slurp(dir2.path / "manifest.json"));
  CHECK(j["subcommand"] == "floquet");
  auto csv = slurp(dir2.path / "floquet.csv");
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 7);  // header + Lx rows
}

TEST_CASE("config file loads and explicit flags override it") {
  TempDir dir("cfgfile");
  auto cfg = LatticeConfig::make(1, 5, 1.0, 0.25, 6, BoundaryX::Dirichlet);
  std::ofstream((dir.path / "run.cfg").string()) << serialize_config(cfg);
  CHECK(run({"lss", "--config", (dir.path / "run.cfg").string(), "--route",
             "direct", "--out", dir.path.string()}) == 0);
  auto man = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
  CHECK(man["parameters"]["Lx"] == "6");
}

TEST_CASE("fnv1a64 matches the reference test vectors") {
  // standard 64-bit FNV-1a: empty string hashes to the offset basis
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(hash_hex("a") == "af63dc4c8601ec8c");
  CHECK(hash_hex("foobar") == "85944171f73967e8");
}
