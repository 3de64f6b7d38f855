#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli_app.hpp"
#include "model_io.hpp"
#include "report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace oqwalk;

namespace {

std::string model_path(const std::string& name) {
  return std::string(OQW_SOURCE_DIR) + "/models/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Value and tolerance of a named CSV row; fails the test if absent.
std::pair<double, double> csv_row(const std::string& csv, const std::string& quantity) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "quantity,value,tolerance,provenance");
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    if (line.substr(0, c1) != quantity) continue;
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    const std::string val = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string tol = line.substr(c2 + 1, c3 - c2 - 1);
    return {std::stod(val), tol.empty() ? 0.0 : std::stod(tol)};
  }
  FAIL("missing csv row ", quantity);
  return {0, 0};
}

std::string csv_field(const std::string& csv, const std::string& quantity, int field) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    if (line.substr(0, c1) != quantity) continue;
    size_t start = 0, pos = 0;
    for (int f = 0; f <= field; ++f) {
      start = pos == 0 ? 0 : pos + 1;
      pos = line.find(',', start);
      if (f == field) return line.substr(start, pos == std::string::npos ? pos : pos - start);
      if (pos == std::string::npos) break;
    }
  }
  FAIL("missing csv row ", quantity);
  return "";
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& text) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("oqw_cli_test_" + std::to_string(++counter) + ".json");
    std::ofstream f(path, std::ios::binary);
    f << text;
  }
  ~TempFile() { std::error_code ec; std::filesystem::remove(path, ec); }
};

const std::vector<std::string> kBundled = {
    "two-site-coin.json",          "three-site-cycle-unital.json",
    "two-site-swapped.json",       "two-site-symmetric.json",
    "two-site-rotations.json",     "two-site-shift.json",
    "four-state-classical.json",   "three-site-spin.json",
    "cycle-3.json",                "path-3.json",
    "two-state-flip.json",         "two-state-absorbing.json"};

}  // namespace

TEST_CASE("model files parse, round-trip and digest deterministically") {
  for (const auto& name : kBundled) {
    CAPTURE(name);
    const std::string text = read_file(model_path(name));
    const ModelFile a = parse_model(text);
    const std::string ser = serialize_model(a);
    const ModelFile b = parse_model(ser);
    CHECK(serialize_model(b) == ser);

    CHECK(b.format_version == a.format_version);
    CHECK(b.kind == a.kind);
    CHECK(b.sites == a.sites);
    CHECK(b.internal_dim == a.internal_dim);
    CHECK(b.generator == a.generator);
    CHECK(b.checks == a.checks);
    REQUIRE(b.blocks.size() == a.blocks.size());
    for (const auto& [key, m] : a.blocks) {
      REQUIRE(b.blocks.count(key) == 1);
      CHECK((b.blocks.at(key) - m).cwiseAbs().maxCoeff() == 0.0);
    }
    REQUIRE(b.states.size() == a.states.size());
    for (const auto& [key, m] : a.states) {
      REQUIRE(b.states.count(key) == 1);
      CHECK((b.states.at(key) - m).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(fnv1a_digest(text) == fnv1a_digest(text));
    CHECK(fnv1a_digest(text).size() == 16);
  }
}

TEST_CASE("parse errors carry position and schema diagnostics") {
  CHECK_THROWS_WITH_AS(parse_model("{\n  \"kind\": oqw\n}"),
                       doctest::Contains("line 2"), model_error);
  CHECK_THROWS_WITH_AS(parse_model("[1,2]"), doctest::Contains("JSON object"), model_error);

  const char* base =
      "{\"format_version\":1,\"kind\":\"oqw\",\"sites\":2,\"internal_dim\":1,\"blocks\":{}}";
  CHECK_NOTHROW(parse_model(base));

  auto mutate = [&](const std::string& find, const std::string& repl) {
    std::string s = base;
    s.replace(s.find(find), find.size(), repl);
    return s;
  };
  CHECK_THROWS_WITH_AS(parse_model(mutate("\"sites\":2", "\"sites\":2,\"bogus\":1")),
                       doctest::Contains("unknown field 'bogus'"), model_error);
  CHECK_THROWS_WITH_AS(parse_model(mutate("\"format_version\":1", "\"format_version\":7")),
                       doctest::Contains("format_version"), model_error);
  CHECK_THROWS_WITH_AS(parse_model(mutate("\"kind\":\"oqw\"", "\"kind\":\"magic\"")),
                       doctest::Contains("unknown model kind"), model_error);
  CHECK_THROWS_WITH_AS(parse_model(mutate("\"sites\":2", "\"sites\":0")),
                       doctest::Contains("sites"), model_error);
  CHECK_THROWS_WITH_AS(
      parse_model(mutate("\"kind\":\"oqw\"", "\"kind\":\"graph\",\"generator\":\"classical_q\"")),
      doctest::Contains("classical_q"), model_error);
  CHECK_THROWS_WITH_AS(parse_model(mutate("\"blocks\":{}", "\"blocks\":{\"3,1\":[[[1,0]]]}")),
                       doctest::Contains("out of range"), model_error);
  CHECK_THROWS_WITH_AS(parse_model(mutate("\"blocks\":{}", "\"blocks\":{\"11\":[[[1,0]]]}")),
                       doctest::Contains("to,from"), model_error);
  CHECK_THROWS_WITH_AS(
      parse_model(mutate("\"blocks\":{}", "\"blocks\":{\"1,1\":[[[1,0],[0,0]]]}")),
      doctest::Contains("entries"), model_error);
  CHECK_THROWS_WITH_AS(
      parse_model("{\"format_version\":1,\"kind\":\"stochastic\",\"sites\":2,"
                  "\"internal_dim\":2,\"blocks\":{}}"),
      doctest::Contains("internal_dim"), model_error);

  // States must be densities.
  const std::string bad_state =
      "{\"format_version\":1,\"kind\":\"oqw\",\"sites\":1,\"internal_dim\":1,"
      "\"blocks\":{\"1,1\":[[[1,0]]]},\"states\":{\"x\":[[[2,0]]]}}";
  CHECK_THROWS_WITH_AS(parse_model(bad_state), doctest::Contains("unit trace"), model_error);
}

TEST_CASE("named states resolve and default to the maximally mixed density") {
  const ModelFile mf = parse_model(read_file(model_path("two-site-coin.json")));
  const Mat<double> mixed = named_state(mf, "");
  CHECK((mixed - 0.5 * Mat<double>::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  const Mat<double> e11 = named_state(mf, "e11");
  CHECK(e11(0, 0).real() == 1.0);
  CHECK(std::abs(e11(1, 1)) == 0.0);
  CHECK_THROWS_WITH_AS(named_state(mf, "nope"), doctest::Contains("unknown state"),
                       model_error);
}

TEST_CASE("validate subcommand reports the walk hypotheses") {
  const auto r = cli({"validate", model_path("two-site-coin.json")});
  CHECK(r.code == 0);
  CHECK(r.out.find("trace_defect") != std::string::npos);
  CHECK(r.out.find("verdict: PASS") != std::string::npos);
  const auto rc = cli({"validate", model_path("two-site-coin.json"), "--csv", "-"});
  CHECK(csv_field(rc.out, "unital", 1) == "false");
  CHECK(csv_row(rc.out, "trace_defect").first <= 1e-10);

  const auto g = cli({"validate", model_path("cycle-3.json")});
  CHECK(g.code == 0);
  CHECK(g.out.find("vertices") != std::string::npos);

  // Corrupted block dimension: diagnostic and nonzero exit.
  std::string text = read_file(model_path("two-site-coin.json"));
  const std::string needle = "\"2,2\": [";
  text.replace(text.find(needle), needle.size(), "\"2,2\": [[[1, 0]],");
  TempFile bad(text);
  const auto b = cli({"validate", bad.path.string()});
  CHECK(b.code == 2);
  CHECK(b.err.find("input error") != std::string::npos);

  const auto missing = cli({"validate", "/nonexistent/model.json"});
  CHECK(missing.code == 2);
}

TEST_CASE("hitting subcommand matches the worked values") {
  // Coin walk, 1 -> 2 from E11: certain visit, mean time 2.
  auto r = cli({"hitting", model_path("two-site-coin.json"), "--from", "1", "--to", "2",
                "--state", "e11", "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "hitting_probability").first == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(csv_row(r.out, "mean_hitting_time").first == doctest::Approx(2.0).epsilon(1e-10));

  // Rotation walk under rate-2 Poisson monitoring: tau = 1 + 2/lambda = 2.
  r = cli({"hitting", model_path("two-site-rotations.json"), "--from", "1", "--to", "2",
           "--mode", "poisson", "--lambda", "2", "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "mean_hitting_time").first == doctest::Approx(2.0).epsilon(1e-10));

  // Classical 4-state chain, large-rate limit from vertex 4 to vertex 1.
  r = cli({"hitting", model_path("four-state-classical.json"), "--from", "4", "--to", "1",
           "--mode", "ct-limit", "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "mean_hitting_time_limit").first ==
        doctest::Approx(2.375).epsilon(1e-8));

  const auto bad = cli({"hitting", model_path("two-site-coin.json"), "--from", "9", "--to",
                        "1"});
  CHECK(bad.code == 2);
  const auto badstate = cli({"hitting", model_path("two-site-coin.json"), "--from", "1",
                             "--to", "2", "--state", "nope"});
  CHECK(badstate.code == 2);
}

TEST_CASE("stationary, mhtf and kac subcommands reproduce the ergodic values") {
  auto r = cli({"stationary", model_path("two-site-coin.json"), "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "stationary_mass_1").first == doctest::Approx(2.0 / 3).epsilon(1e-10));
  CHECK(csv_row(r.out, "stationary_mass_2").first == doctest::Approx(1.0 / 3).epsilon(1e-10));
  CHECK(csv_row(r.out, "stationary_1_11").second == 0.0);  // entry rows exist
  // Complex values are rendered as re+imi; real values drop the imaginary part.
  CHECK(format_complex<double>({1.5, -2.0}) == "1.5-2i");
  CHECK(format_complex<double>({0.0, 0.25}) == "0+0.25i");
  CHECK(format_complex<double>({0.25, 0.0}) == "0.25");

  r = cli({"mhtf", model_path("two-site-coin.json"), "--which", "2", "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "stationary_mean_hit_1").first == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(csv_row(r.out, "stationary_mean_hit_2").first ==
        doctest::Approx(23.0 / 9).epsilon(1e-10));

  r = cli({"kac", model_path("two-site-coin.json"), "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "mean_return_1").first == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(csv_row(r.out, "mean_return_2").first == doctest::Approx(3.0).epsilon(1e-10));

  r = cli({"kac", model_path("four-state-classical.json"), "--ct", "--csv", "-"});
  CHECK(r.code == 0);
  CHECK(csv_row(r.out, "mean_return_ct_1").first ==
        doctest::Approx(91.0 / 48).epsilon(1e-8));

  // The continuous-time identity needs a vertex-diagonal model.
  const auto bad = cli({"kac", model_path("two-site-shift.json"), "--ct"});
  CHECK(bad.code == 2);
}

TEST_CASE("recurrence subcommand agrees across diagnostics") {
  const auto r = cli({"recurrence", model_path("cycle-3.json"), "--delta", "0.5", "--csv",
                      "-"});
  CHECK(r.code == 0);
  CHECK(csv_field(r.out, "verdict_1", 1) == "recurrent");
  CHECK(csv_field(r.out, "verdict_2", 1) == "recurrent");
  CHECK(csv_field(r.out, "verdict_3", 1) == "recurrent");

  const auto a = cli({"recurrence", model_path("two-state-absorbing.json"), "--csv", "-"});
  CHECK(a.code == 0);
  CHECK(csv_field(a.out, "verdict_1", 1) == "recurrent");
  CHECK(csv_field(a.out, "verdict_2", 1) == "transient");
}

TEST_CASE("simulate subcommand is reproducible and unbiased") {
  const std::vector<std::string> args = {"simulate", model_path("two-site-coin.json"),
                                         "--from", "1", "--to", "2", "--state", "e11",
                                         "--samples", "20000", "--seed", "7", "--csv", "-"};
  const auto r1 = cli(args);
  const auto r2 = cli(args);
  CHECK(r1.code == 0);
  CHECK(r1.out == r2.out);  // byte-identical machine output
  const auto [mean, se] = csv_row(r1.out, "mc_mean_hitting_time");
  CHECK(std::abs(mean - 2.0) <= 3 * se);
  const auto [prob, pse] = csv_row(r1.out, "mc_hitting_probability");
  CHECK(prob == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(csv_row(r1.out, "censored_fraction").first == 0.0);

  // Different seed moves the estimate but stays in the band.
  auto args2 = args;
  args2[11] = "8";
  const auto r3 = cli(args2);
  CHECK(r3.out != r1.out);
  const auto [mean3, se3] = csv_row(r3.out, "mc_mean_hitting_time");
  CHECK(std::abs(mean3 - 2.0) <= 3 * se3);
}

TEST_CASE("exit codes distinguish input, numerical and hypothesis failures") {
  // Identity walk: the monitored resolvent has a unit eigenvalue, so the
  // Poisson hitting hypothesis fails -> exit 3.
  TempFile ident(
      "{\"format_version\":1,\"kind\":\"oqw\",\"sites\":2,\"internal_dim\":2,"
      "\"blocks\":{\"1,1\":[[[1,0],[0,0]],[[0,0],[1,0]]],"
      "\"2,2\":[[[1,0],[0,0]],[[0,0],[1,0]]]},"
      "\"generator\":\"phi_minus_identity\"}");
  const auto h = cli({"hitting", ident.path.string(), "--from", "1", "--to", "2", "--mode",
                      "poisson", "--lambda", "1"});
  CHECK(h.code == 3);
  CHECK(h.err.find("hypothesis violation") != std::string::npos);

  // A declared check with a wrong expectation -> exit 1.
  std::string text = read_file(model_path("two-site-coin.json"));
  const std::string needle = "\"checks\": [";
  text.replace(text.find(needle), needle.size(),
               "\"checks\": [{\"op\":\"kac\",\"means\":[9.0,9.0],\"tolerance\":1e-8},");
  TempFile wrong(text);
  const auto w = cli({"check-all", wrong.path.string()});
  CHECK(w.code == 1);
  CHECK(w.out.find("verdict: FAIL") != std::string::npos);

  // The jump-chain sampler refuses graph-induced generators -> exit 2.
  const auto jg = cli({"simulate", model_path("cycle-3.json"), "--from", "1", "--to", "2",
                       "--samples", "100", "--seed", "1"});
  CHECK(jg.code == 2);
  const auto mg = cli({"mhtf", model_path("cycle-3.json"), "--which", "ct"});
  CHECK(mg.code == 2);

  const auto unknown = cli({"frobnicate", model_path("two-site-coin.json")});
  CHECK(unknown.code == 2);
}

TEST_CASE("every bundled model passes its declared checks deterministically") {
  for (const auto& name : kBundled) {
    CAPTURE(name);
    const auto r = cli({"check-all", model_path(name), "--csv", "-"});
    CHECK(r.code == 0);
    const auto r2 = cli({"check-all", model_path(name), "--csv", "-"});
    CHECK(r.out == r2.out);
  }
}
