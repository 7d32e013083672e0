#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "csv_io.hpp"
#include "error.hpp"
#include "run.hpp"

using namespace eqcausal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

template <class Fn>
std::string message_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  FAIL("expected an error");
  return "";
}

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("eqcausal_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_table(const fs::path& dir, const std::string& a, const std::string& r,
                 const std::string& y) {
  write(dir / "A.csv", a);
  write(dir / "R.csv", r);
  write(dir / "y.csv", y);
}

}  // namespace

TEST_CASE("csv: a 2x2 table survives a save and reload bit for bit") {
  TempDir tmp;
  IoTable t;
  t.sectors = {"agri", "manu, heavy"};
  t.impacts = {"ghg", "employment"};
  t.A.resize(2, 2);
  t.A << 0.1, 1.0 / 3.0, 0.2, 0.30000000000000004;
  t.R.resize(2, 2);
  t.R << 1e-300, 2.5, 0.7, 1.0 / 7.0;
  t.y.resize(2);
  t.y << 10.0, 5.123456789012345;

  const IoTablePaths p = IoTablePaths::in_directory(tmp.path);
  save_iotable_csv(t, p);
  const IoTable back = load_iotable_csv(p);
  CHECK(back.sectors == t.sectors);
  CHECK(back.impacts == t.impacts);
  for (int i = 0; i < 2; ++i) {
    CHECK(back.y[i] == t.y[i]);
    for (int j = 0; j < 2; ++j) {
      CHECK(back.A(i, j) == t.A(i, j));
      CHECK(back.R(i, j) == t.R(i, j));
    }
  }
  save_iotable_csv(back, IoTablePaths::in_directory(tmp.path / "."));
  CHECK(read(p.A) == read(tmp.path / "A.csv"));
}

TEST_CASE("csv: reading the example table") {
  TempDir tmp;
  write_table(tmp.path, "a,b\n0.1,0.2\n0.3,0.1\n", "impact,a,b\nghg,1,2\nemployment,3,4\n",
              "y\n10\n5\n");
  const IoTable t = load_iotable_csv(IoTablePaths::in_directory(tmp.path));
  CHECK(t.dim() == 2);
  CHECK(t.A(1, 0) == 0.3);
  CHECK(t.impact_row("employment") == 1);
  CHECK(t.R(1, 1) == 4.0);
  CHECK(t.y[0] == 10.0);
}

TEST_CASE("csv: windows line endings, a byte order mark and a trailing blank line are accepted") {
  TempDir tmp;
  write_table(tmp.path, "\xEF\xBB\xBF" "a,b\r\n0.1,0.2\r\n0.3,0.1\r\n\r\n",
              "impact,a,b\r\nghg,1,2\r\n", "y\r\n10\r\n5\r\n");
  const IoTable t = load_iotable_csv(IoTablePaths::in_directory(tmp.path));
  CHECK(t.sectors[0] == "a");
  CHECK(t.A(1, 1) == 0.1);
}

TEST_CASE("csv: a negative coefficient is reported with its cell") {
  TempDir tmp;
  write_table(tmp.path, "a,b\n0.1,-0.2\n0.3,0.1\n", "impact,a,b\nghg,1,2\n", "y\n10\n5\n");
  const IoTablePaths p = IoTablePaths::in_directory(tmp.path);
  CHECK(code_of([&] { load_iotable_csv(p); }) == ErrorCode::NegativeEntry);
  const std::string msg = message_of([&] { load_iotable_csv(p); });
  CHECK(msg.find("A[a][b]") != std::string::npos);
  CHECK(msg.find("A.csv:2:2") != std::string::npos);
}

TEST_CASE("csv: negative impacts and demand are rejected too") {
  TempDir tmp;
  write_table(tmp.path, "a\n0.1\n", "impact,a\nghg,-1\n", "y\n1\n");
  CHECK(code_of([&] { load_iotable_csv(IoTablePaths::in_directory(tmp.path)); }) ==
        ErrorCode::NegativeEntry);
  write_table(tmp.path, "a\n0.1\n", "impact,a\nghg,1\n", "y\n-1\n");
  CHECK(code_of([&] { load_iotable_csv(IoTablePaths::in_directory(tmp.path)); }) ==
        ErrorCode::NegativeEntry);
}

TEST_CASE("csv: dimension mismatches") {
  TempDir tmp;
  const IoTablePaths p = IoTablePaths::in_directory(tmp.path);
  SUBCASE("A has a short row") {
    write_table(tmp.path, "a,b\n0.1\n0.3,0.1\n", "impact,a,b\nghg,1,2\n", "y\n10\n5\n");
  }
  SUBCASE("A has too few rows") {
    write_table(tmp.path, "a,b\n0.1,0.2\n", "impact,a,b\nghg,1,2\n", "y\n10\n5\n");
  }
  SUBCASE("y is too long") {
    write_table(tmp.path, "a,b\n0.1,0.2\n0.3,0.1\n", "impact,a,b\nghg,1,2\n", "y\n10\n5\n1\n");
  }
  SUBCASE("R names other sectors") {
    write_table(tmp.path, "a,b\n0.1,0.2\n0.3,0.1\n", "impact,a,c\nghg,1,2\n", "y\n10\n5\n");
  }
  CHECK(code_of([&] { load_iotable_csv(p); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("csv: parse errors carry file, line and column") {
  TempDir tmp;
  write_table(tmp.path, "a,b\n0.1,0.2\n0.3,abc\n", "impact,a,b\nghg,1,2\n", "y\n10\n5\n");
  const IoTablePaths p = IoTablePaths::in_directory(tmp.path);
  CHECK(code_of([&] { load_iotable_csv(p); }) == ErrorCode::ParseError);
  CHECK(message_of([&] { load_iotable_csv(p); }).find("A.csv:3:2") != std::string::npos);

  write_table(tmp.path, "a,b\n0.1,0.2\n0.3,0.1\n", "impact,a,b\nghg,1,2\n", "y\n10\n5x\n");
  CHECK(message_of([&] { load_iotable_csv(p); }).find("y.csv:3:1") != std::string::npos);
  write_table(tmp.path, "a\n0.1\n", "impact,a\nghg,nan\n", "y\n1\n");
  CHECK(message_of([&] { load_iotable_csv(p); }).find("R.csv:2:2") != std::string::npos);
}

TEST_CASE("csv: missing files are io errors") {
  TempDir tmp;
  CHECK(code_of([&] { load_iotable_csv(IoTablePaths::in_directory(tmp.path / "nope")); }) ==
        ErrorCode::IoError);
}

TEST_CASE("csv: a Hawkins-Simon failure is a warning, not an error") {
  TempDir tmp;
  write_table(tmp.path, "a,b\n0.5,0.9\n0.9,0.5\n", "impact,a,b\nghg,1,2\n", "y\n1\n1\n");
  std::vector<std::string> w;
  load_iotable_csv(IoTablePaths::in_directory(tmp.path), &w);
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("Hawkins-Simon") != std::string::npos);
}

TEST_CASE("csv: quoted fields and the writer") {
  CHECK(split_csv_line("a,\"b,c\",\"d\"\"e\"") == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(split_csv_line("") == std::vector<std::string>{""});
  CsvWriter w({"x", "y"});
  w.row({"1", "a,b"});
  CHECK(w.str() == "x,y\n1,\"a,b\"\n");
  CHECK(code_of([&] { w.row({"1"}); }) == ErrorCode::DimensionMismatch);
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("config: a minimal document is fully defaulted") {
  const ExperimentConfig c = parse_config(json{{"command", "solve"}, {"model", "motivating-example"}});
  CHECK(c.command == Command::Solve);
  CHECK(c.seed == 0);
  CHECK(c.solver.method == SolverMethod::Anderson);
  CHECK(c.solver.history == 5);
  CHECK(c.solver.relaxation == 2.0);
  CHECK(c.solver.tol == 1e-4);
  CHECK(c.solver.max_iter == 5000);
  CHECK(c.adam.lr == 1e-3);
  CHECK(c.adam.iterations == 10000);
  CHECK(c.intervention.group == LieGroup::Multiplicative);
  CHECK(c.bench.methods.size() == 3);
  CHECK(c.output == fs::path("out"));
}

TEST_CASE("config: unknown fields are rejected with their pointer") {
  const json doc = {{"command", "solve"}, {"model", "motivating-example"}, {"solver", {{"tolx", 1}}}};
  CHECK(code_of([&] { parse_config(doc); }) == ErrorCode::SchemaError);
  CHECK(message_of([&] { parse_config(doc); }).find("/solver/tolx") != std::string::npos);
  CHECK(code_of([&] { parse_config(json{{"command", "solve"}, {"model", "motivating-example"},
                                        {"extra", 1}}); }) == ErrorCode::SchemaError);
}

TEST_CASE("config: a lambda list outside pareto is a schema error") {
  const json doc = {{"command", "optimize"},
                    {"model", "leontief-synthetic-4"},
                    {"loss", {{"lambdas", {0, 1}}}}};
  CHECK(message_of([&] { parse_config(doc); }).find("/loss/lambdas") != std::string::npos);
  json p = doc;
  p["command"] = "pareto";
  CHECK(parse_config(p).loss.lambdas == std::vector<double>{0, 1});
  p["loss"] = json::object();
  CHECK(message_of([&] { parse_config(p); }).find("/loss/lambdas") != std::string::npos);
}

TEST_CASE("config: cross-field checks") {
  auto err = [](const json& doc) { return message_of([&] { parse_config(doc); }); };
  CHECK(err({{"command", "optimize"}, {"model", "motivating-example"}}).find("/model") !=
        std::string::npos);
  CHECK(err({{"command", "invariant"}, {"model", "two-compartment"}}).find("/model") !=
        std::string::npos);
  CHECK(err({{"command", "bench"}, {"model", "motivating-example"}}).find("/model") !=
        std::string::npos);
  CHECK(err({{"command", "solve"}, {"model", "nope"}}).find("/model") != std::string::npos);
  CHECK(err({{"command", "solve"}}).find("/model") != std::string::npos);
  CHECK(err({{"command", "fly"}, {"model", "motivating-example"}}).find("/command") !=
        std::string::npos);
  CHECK(err({{"command", "optimize"},
             {"model", "leontief-synthetic-4"},
             {"intervention", {{"targets", {0, 4}}}}})
            .find("/intervention/targets/1") != std::string::npos);
  CHECK(err({{"command", "optimize"},
             {"model", "leontief-synthetic-4"},
             {"intervention", {{"lo", {0.5, 0.5}}}}})
            .find("/intervention/lo") != std::string::npos);
  CHECK(err({{"command", "optimize"},
             {"model", "leontief-synthetic-4"},
             {"loss", {{"objective", "water"}}}})
            .find("/loss/objective") != std::string::npos);
  CHECK(err({{"command", "solve"}, {"model", "motivating-example"}, {"solver", {{"tol", -1}}}})
            .find("/solver") != std::string::npos);
  CHECK(err({{"command", "solve"}, {"model", "motivating-example"}, {"seed", -3}})
            .find("/seed") != std::string::npos);
}

TEST_CASE("config: csv model paths resolve against the config directory") {
  TempDir tmp;
  fs::create_directories(tmp.path / "data");
  write_table(tmp.path / "data", "a\n0.1\n", "impact,a\nghg,1\nemployment,2\n", "y\n1\n");
  write(tmp.path / "c.json", R"({"command": "optimize", "model": {"dir": "data"}})");
  const ExperimentConfig c = load_config(tmp.path / "c.json");
  REQUIRE(c.model.csv);
  CHECK(c.model.csv->A == tmp.path / "data" / "A.csv");
  CHECK(c.output == tmp.path / "out");

  write(tmp.path / "bad.json", R"({"command": )");
  CHECK(code_of([&] { load_config(tmp.path / "bad.json"); }) == ErrorCode::ParseError);
  write(tmp.path / "missing.json", R"({"command": "solve", "model": {"dir": "nowhere"}})");
  CHECK(code_of([&] { load_config(tmp.path / "missing.json"); }) == ErrorCode::SchemaError);
}

TEST_CASE("config: the canonical form parses back to itself") {
  const ExperimentConfig c = parse_config(json{{"command", "pareto"},
                                               {"model", "leontief-synthetic-5"},
                                               {"seed", 7},
                                               {"loss", {{"lambdas", {0, 2}}}},
                                               {"intervention", {{"targets", {1, 2}}}},
                                               {"sampling", {{"u_lo", 0.7}, {"u_hi", 0.9}}}});
  const json j = config_to_json(c);
  CHECK(config_to_json(parse_config(j)) == j);
  CHECK_FALSE(j.contains("output"));
}

TEST_CASE("sha256: known digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("mlp json: round trip and shape checks") {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {3, 2};
  Vector w(spec.param_count());
  for (int i = 0; i < w.size(); ++i) w[i] = 0.1 * i - 1.0 / 3.0;
  const json j = mlp_to_json(spec, w);
  CHECK(j["layers"].size() == 3);
  CHECK(j["layers"][0]["rows"] == 3);
  CHECK(j["layers"][0]["cols"] == 2);
  const auto [spec2, w2] = mlp_from_json(json::parse(j.dump()));
  CHECK(spec2.hidden == spec.hidden);
  CHECK(spec2.input_dim == 2);
  CHECK(w2 == w);

  json bad = j;
  bad["layers"][1]["bias"] = {1.0};
  CHECK(code_of([&] { mlp_from_json(bad); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { mlp_from_json(json{{"hidden", 3}}); }) == ErrorCode::ParseError);
  CHECK(code_of([&] { mlp_to_json(spec, Vector::Zero(2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("run: solve writes results and a manifest") {
  TempDir tmp;
  ExperimentConfig c = parse_config(json{{"command", "solve"}, {"model", "leontief-synthetic-6"},
                                         {"solver", {{"tol", 1e-10}}}});
  c.output = tmp.path / "o";
  const RunManifest m = run_experiment(c);
  CHECK(m.exit_code() == 0);
  REQUIRE(m.stages.size() == 2);
  CHECK(m.stages[1].metrics["closed_form_relative_error"].get<double>() < 1e-8);
  const json doc = json::parse(read(c.output / "manifest.json"));
  CHECK(doc["command"] == "solve");
  CHECK(doc["library_version"] == kLibraryVersion);
  CHECK(doc["config_hash"] == sha256_hex(config_to_json(c).dump()));
  REQUIRE(doc["outputs"].size() == 2);
  for (const auto& f : doc["outputs"]) {
    CHECK(f["sha256"] == sha256_hex(read(c.output / f["file"].get<std::string>())));
  }
  CHECK(read(c.output / "equilibrium.csv").rfind("node,name,value,closed_form\n", 0) == 0);
}

TEST_CASE("run: identical configs give identical outputs") {
  TempDir tmp;
  for (const char* cmd : {"optimize", "grad-check"}) {
    CAPTURE(cmd);
    json doc = {{"command", cmd},
                {"model", "leontief-synthetic-4"},
                {"seed", 3},
                {"adam", {{"iterations", 40}, {"lr", 0.01}}}};
    if (std::string(cmd) == "optimize") doc["loss"] = {{"lambda", 1.0}};
    ExperimentConfig a = parse_config(doc);
    ExperimentConfig b = a;
    a.output = tmp.path / (std::string(cmd) + "_a");
    b.output = tmp.path / (std::string(cmd) + "_b");
    const RunManifest ma = run_experiment(a);
    const RunManifest mb = run_experiment(b);
    CHECK(ma.exit_code() == 0);
    CHECK(ma.config_hash == mb.config_hash);
    REQUIRE(ma.outputs.size() == mb.outputs.size());
    for (std::size_t i = 0; i < ma.outputs.size(); ++i) {
      CHECK(ma.outputs[i].name == mb.outputs[i].name);
      CHECK(ma.outputs[i].sha256 == mb.outputs[i].sha256);
    }
  }
}

TEST_CASE("run: csv inputs are checksummed and stage failures set exit code 1") {
  TempDir tmp;
  write_table(tmp.path, "a,b\n0.1,0.2\n0.3,0.1\n", "impact,a,b\nghg,1,2\nemployment,3,4\n",
              "y\n10\n5\n");
  json doc = {{"command", "solve"},
              {"model", {{"dir", tmp.path.string()}}},
              {"solver", {{"max_iter", 1}, {"method", "forward"}}}};
  ExperimentConfig c = parse_config(doc);
  c.output = tmp.path / "o";
  const RunManifest m = run_experiment(c);
  CHECK(m.exit_code() == 1);
  CHECK_FALSE(m.stages.back().ok);
  REQUIRE(m.inputs.size() == 3);
  CHECK(m.inputs[0].sha256 == sha256_file(tmp.path / "A.csv"));
}

TEST_CASE("run: a tiny bench") {
  TempDir tmp;
  ExperimentConfig c = parse_config(
      json{{"command", "bench"}, {"bench", {{"dims", {2, 5}}, {"seeds", 2}}}});
  c.output = tmp.path / "o";
  const RunManifest m = run_experiment(c);
  CHECK(m.exit_code() == 0);
  const std::string csv = read(c.output / "bench.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
}
