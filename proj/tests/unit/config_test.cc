#include <doctest.h>

#include "gentkg/config.h"
#include "support/temp_dir.h"

using namespace gentkg;
using nlohmann::json;

namespace {

std::string error_path(const json& j) {
  try {
    run_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("defaults round-trip through json") {
  const RunConfig cfg;
  const auto back = run_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.fingerprint() == cfg.fingerprint());
  CHECK(cfg.fingerprint().size() == 16);
}

TEST_CASE("errors name the offending path") {
  CHECK(error_path({{"mining", {{"num_walks", 0}}}}) == "mining");
  CHECK(error_path({{"mining", {{"num_walks", "many"}}}}) == "mining.num_walks");
  CHECK(error_path({{"mining", {{"walkz", 3}}}}) == "mining.walkz");
  CHECK(error_path({{"colour", "red"}}) == "colour");
  CHECK(error_path({{"dataset", {{"format", "csv"}}}}) == "dataset.format");
  CHECK(error_path({{"dataset", {{"time_gap", 0}}}}) == "dataset.time_gap");
  CHECK(error_path({{"predictor", "gpt"}}) == "predictor");
  CHECK(error_path({{"seeds", json::array()}}) == "seeds");
  CHECK(error_path({{"k", 0}}) == "k");
  CHECK(error_path({{"ablation", {{"orders", {"sideways"}}}}}) == "ablation.orders");
  CHECK(error_path({{"prompt", {{"order", "sideways"}}}}) == "prompt.order");
  CHECK(error_path(json::array()) == "<root>");
}

TEST_CASE("fingerprint tracks result-affecting fields only") {
  RunConfig a;
  RunConfig b = a;
  b.output_dir = "elsewhere";
  b.threads = 7;
  b.dataset.data_root = "/mnt/data";
  b.gen.max_in_flight = 1;
  CHECK(a.fingerprint() == b.fingerprint());

  RunConfig c = a;
  c.mining.num_walks = 201;
  CHECK(a.fingerprint() != c.fingerprint());
  RunConfig d = a;
  d.seeds = {2};
  CHECK(a.fingerprint() != d.fingerprint());
}

TEST_CASE("fingerprint ignores key order in the source file") {
  const json x = json::parse(R"({"k": 16, "mining": {"seed": 3, "num_walks": 50}})");
  const json y = json::parse(R"({"mining": {"num_walks": 50, "seed": 3}, "k": 16})");
  CHECK(run_config_from_json(x).fingerprint() == run_config_from_json(y).fingerprint());
}

TEST_CASE("config files") {
  gentkg::testing::TempDir dir;
  dir.write("ok.json", R"({"dataset": {"name": "synthetic"}, "retrieval": {"max_history": 20}})");
  CHECK(load_run_config(dir / "ok.json").retrieval.max_history == 20);
  dir.write("bad.json", "{ not json");
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("presets") {
  const auto p = find_preset("icews14");
  REQUIRE(p);
  CHECK(std::string(p->directory) == "ICEWS14");
  CHECK(p->time_gap == 24);
  CHECK(find_preset("gdelt")->time_gap == 15);
  CHECK(find_preset("yago")->time_gap == 1);
  CHECK_FALSE(find_preset("wikidata"));
}
