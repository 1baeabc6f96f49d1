#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <unistd.h>
#include <vector>

#include "varcurv/config.hpp"
#include "varcurv/io.hpp"

using namespace varcurv;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("varcurv_io_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("doubles round-trip through text exactly") {
  const double cases[] = {0.0,
                          -0.0,
                          1.0 / 3.0,
                          0.1,
                          -1234.5678901234567,
                          1e308,
                          -1e-308,
                          5e-324,  // smallest denormal
                          std::numeric_limits<double>::max(),
                          3.141592653589793,
                          std::numeric_limits<double>::infinity()};
  for (double x : cases) {
    INFO("value " << x);
    const double back = parse_double(format_double(x));
    REQUIRE(std::memcmp(&back, &x, sizeof x) == 0);
  }
  REQUIRE_THROWS(parse_double("not-a-number"));
}

TEST_CASE("fnv1a64 matches published vectors") {
  REQUIRE(fnv1a64_hex("") == "cbf29ce484222325");
  REQUIRE(fnv1a64_hex("a") == "af63dc4c8601ec8c");
  REQUIRE(fnv1a64_hex("abc") == "e71fa2190541574b");
}

TEST_CASE("csv renders and parses round-trip") {
  Csv csv;
  csv.columns = {"iteration", "reward", "grad_norm"};
  csv.rows = {{"0", format_double(0.5), format_double(1.0 / 3.0)},
              {"1", format_double(-0.25), "nan"}};
  const std::string text = render_csv(csv);
  const Csv back = parse_csv(text);
  REQUIRE(back.columns == csv.columns);
  REQUIRE(back.rows == csv.rows);
  REQUIRE(csv_column_index(back, "reward") == 1);
  REQUIRE_THROWS(csv_column_index(back, "no_such_column"));

  // Windows line endings and trailing blank lines are tolerated.
  const Csv crlf = parse_csv("a,b\r\n1,2\r\n\r\n");
  REQUIRE(crlf.rows.size() == 1);
  REQUIRE(crlf.rows[0] == std::vector<std::string>{"1", "2"});

  REQUIRE_THROWS(parse_csv("a,b\n1,2,3\n"));  // ragged row
  Csv bad;
  bad.columns = {"a", "b"};
  bad.rows = {{"1"}};
  REQUIRE_THROWS(render_csv(bad));
}

TEST_CASE("atomic writes leave no temp files and create parents") {
  TempDir tmp;
  const fs::path target = tmp.path / "deep" / "nested" / "file.txt";
  write_text_atomic(target, "first");
  REQUIRE(read_text(target) == "first");
  write_text_atomic(target, "second");
  REQUIRE(read_text(target) == "second");
  int entries = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path)) {
    REQUIRE(e.path().extension() != ".tmp");
    if (e.is_regular_file()) ++entries;
  }
  REQUIRE(entries == 1);
}

TEST_CASE("manifest round-trips sorted and detects tampering") {
  TempDir tmp;
  write_text_atomic(tmp.path / "b.csv", "x,y\n1,2\n");
  write_text_atomic(tmp.path / "a.json", "{}\n");
  std::vector<ManifestEntry> entries = {
      {"b.csv", 8, fnv1a64_hex("x,y\n1,2\n"), "test"},
      {"a.json", 3, fnv1a64_hex("{}\n"), "test"},
  };
  write_manifest_atomic(tmp.path / "manifest.json", entries);
  const auto back = read_manifest(tmp.path / "manifest.json");
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].file == "a.json");  // sorted by name
  REQUIRE(back[1].file == "b.csv");
  REQUIRE(back[1].hash == fnv1a64_hex("x,y\n1,2\n"));

  REQUIRE(check_manifest(tmp.path, back).empty());

  // Corrupt one byte: both the named file and the kind of damage appear.
  write_text_atomic(tmp.path / "b.csv", "x,y\n1,3\n");
  auto problems = check_manifest(tmp.path, back);
  REQUIRE(problems.size() == 1);
  REQUIRE(problems[0].find("b.csv") != std::string::npos);
  REQUIRE(problems[0].find("hash mismatch") != std::string::npos);

  fs::remove(tmp.path / "a.json");
  problems = check_manifest(tmp.path, back);
  REQUIRE(problems.size() == 2);
  REQUIRE(problems[0].find("missing file: a.json") != std::string::npos);
}

TEST_CASE("artifact writer emits a verifiable manifest") {
  TempDir tmp;
  ArtifactWriter writer(tmp.path / "run", "unit-test");
  Csv csv;
  csv.columns = {"n", "value"};
  csv.rows = {{"1", "0.5"}};
  writer.write_csv("points.csv", csv);
  nlohmann::json doc;
  doc["answer"] = 42;
  writer.write_json("summary.json", doc);
  writer.finalize();

  const auto entries = read_manifest(tmp.path / "run" / "manifest.json");
  REQUIRE(entries.size() == 2);
  REQUIRE(check_manifest(tmp.path / "run", entries).empty());
  for (const auto& e : entries) REQUIRE(e.producer == "unit-test");

  // Same content written again produces byte-identical manifests.
  ArtifactWriter again(tmp.path / "run2", "unit-test");
  again.write_csv("points.csv", csv);
  again.write_json("summary.json", doc);
  again.finalize();
  REQUIRE(read_text(tmp.path / "run" / "manifest.json") ==
          read_text(tmp.path / "run2" / "manifest.json"));
}

TEST_CASE("dotted overrides build and replace nested values") {
  nlohmann::json root = nlohmann::json::object();
  apply_set_override(root, "seed=7");
  apply_set_override(root, "es.population=32");
  apply_set_override(root, "es.antithetic=true");
  apply_set_override(root, "clss.step_sizes=[0.05,0.1]");
  apply_set_override(root, "landscape.kind=two_block");
  REQUIRE(root["seed"] == 7);
  REQUIRE(root["es"]["population"] == 32);
  REQUIRE(root["es"]["antithetic"] == true);
  REQUIRE(root["clss"]["step_sizes"].size() == 2);
  REQUIRE(root["clss"]["step_sizes"][0] == 0.05);
  REQUIRE(root["landscape"]["kind"] == "two_block");

  apply_set_override(root, "es.population=64");  // replace
  REQUIRE(root["es"]["population"] == 64);

  REQUIRE_THROWS_AS(apply_set_override(root, "no_equals"), ConfigError);
  REQUIRE_THROWS_AS(apply_set_override(root, "=5"), ConfigError);
  REQUIRE_THROWS_AS(apply_set_override(root, "a..b=1"), ConfigError);
  // seed is a scalar; a path cannot tunnel through it.
  REQUIRE_THROWS_AS(apply_set_override(root, "seed.inner=1"), ConfigError);
}

TEST_CASE("key cursor reads types strictly and tracks consumption") {
  const nlohmann::json root = {
      {"seed", 42},
      {"sigma", 0.5},
      {"name", "probe"},
      {"flag", true},
      {"weights", {0.1, 0.9}},
      {"counts", {2, 4}},
      {"es", {{"population", 8}, {"unused_key", 1}}},
  };
  KeyCursor top(root);
  REQUIRE(top.integer("seed", 0) == 42);
  REQUIRE(top.number("sigma", 0.0) == 0.5);
  REQUIRE(top.text("name", "") == "probe");
  REQUIRE(top.boolean("flag", false) == true);
  REQUIRE(top.number_list("weights", {}) == std::vector<double>{0.1, 0.9});
  REQUIRE(top.integer_list("counts", {}) == std::vector<int>{2, 4});
  REQUIRE(top.integer("missing", 13) == 13);  // fallback
  KeyCursor es = top.child("es");
  REQUIRE(es.integer("population", 0) == 8);
  // child of an absent key is an empty section, not an error
  REQUIRE(top.child("nothing").integer("x", 5) == 5);

  const auto unknown = unknown_keys(root, top);
  REQUIRE(unknown == std::vector<std::string>{"es.unused_key"});
  REQUIRE_THROWS_WITH(reject_unknown_keys(root, top),
                      Catch::Matchers::ContainsSubstring("es.unused_key"));

  REQUIRE_THROWS_AS(top.integer("sigma", 0), ConfigError);  // 0.5 not integer
  REQUIRE_THROWS_AS(top.number("name", 0.0), ConfigError);
  REQUIRE_THROWS_AS(top.child("seed"), ConfigError);  // scalar, not section
  const nlohmann::json arr = nlohmann::json::array();
  REQUIRE_THROWS_AS(KeyCursor(arr), ConfigError);
}

TEST_CASE("config digest ignores output location only") {
  nlohmann::json a = {{"seed", 1}, {"es", {{"sigma", 0.1}}}};
  nlohmann::json b = a;
  b["output"] = {{"directory", "somewhere/else"}};
  REQUIRE(config_digest(a) == config_digest(b));

  nlohmann::json c = a;
  c["es"]["sigma"] = 0.2;
  REQUIRE(config_digest(a) != config_digest(c));

  // Insertion order does not matter: objects serialize sorted.
  nlohmann::json d = nlohmann::json::object();
  d["es"] = {{"sigma", 0.1}};
  d["seed"] = 1;
  REQUIRE(config_digest(a) == config_digest(d));
}

TEST_CASE("output root resolution prefers cli, then environment") {
  const char* saved = std::getenv("VARCURV_OUTPUT_ROOT");
  const std::string saved_value = saved ? saved : "";

  ::setenv("VARCURV_OUTPUT_ROOT", "/env/root", 1);
  REQUIRE(resolve_output_root(std::string("/cli/root")) ==
          fs::path("/cli/root"));
  REQUIRE(resolve_output_root(std::nullopt) == fs::path("/env/root"));
  REQUIRE(resolve_output_root(std::string("")) == fs::path("/env/root"));

  ::unsetenv("VARCURV_OUTPUT_ROOT");
  REQUIRE(resolve_output_root(std::nullopt) == fs::current_path());

  if (saved)
    ::setenv("VARCURV_OUTPUT_ROOT", saved_value.c_str(), 1);
}
