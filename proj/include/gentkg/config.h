#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gentkg/kg_store.h"
#include "gentkg/llm_client.h"
#include "gentkg/prompter.h"
#include "gentkg/retriever.h"
#include "gentkg/rule_miner.h"

namespace gentkg {

// Validation failure pointing at a config path such as "mining.num_walks".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// 16 hex digits of FNV-1a over the canonical (sorted-key, compact) dump.
std::string fingerprint_of(const nlohmann::json& canonical);

struct DatasetRef {
  // Directory, a preset name (icews14, icews18, gdelt, yago) resolved under
  // data_root, or "synthetic".
  std::string name = "synthetic";
  std::filesystem::path data_root = "data";
  std::optional<TimeStep> time_gap;
  NameFormat format = NameFormat::kAuto;
  bool inverse = true;
};

struct RunConfig {
  DatasetRef dataset;
  MiningParams mining;
  // Mine on train + valid instead of train only.
  bool mine_on_valid = false;
  RetrievalConfig retrieval;
  PromptConfig prompt;
  GenParams gen;
  std::string endpoint;
  std::string predictor = "oracle";  // oracle | llm
  std::string split = "test";        // split used by retrieve/prompt/infer
  std::string filter = "all";        // all | test
  std::vector<std::uint64_t> seeds{1};
  std::size_t k = 1024;
  std::filesystem::path output_dir = "runs/latest";
  std::optional<std::size_t> limit;  // first N queries only
  unsigned threads = 0;
  // ablation grid
  std::vector<std::string> orders{"ascending", "descending", "random",
                                  "removed"};
  std::vector<std::size_t> history_lengths{10, 20, 30, 40, 50};
  std::vector<std::string> formats{"index"};

  void validate() const;
  // Result-affecting fields only (no output directory or thread count).
  nlohmann::json canonical() const;
  std::string fingerprint() const { return fingerprint_of(canonical()); }
};

nlohmann::json to_json(const RunConfig& cfg);
// Missing keys keep defaults; unknown keys and type errors throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& file);

// Known dataset presets: directory name and time gap of the raw timestamps.
struct DatasetPreset {
  const char* key;
  const char* directory;
  TimeStep time_gap;
};
std::optional<DatasetPreset> find_preset(std::string_view name);

// Loads the dataset named by `ref` (synthetic, preset or directory).
Dataset open_dataset(const DatasetRef& ref);

}  // namespace gentkg
