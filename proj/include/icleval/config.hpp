#pragma once

#include "icleval/analytics.hpp"
#include "icleval/corpus.hpp"
#include "icleval/engine.hpp"
#include "icleval/mock_backend.hpp"
#include "icleval/oracle.hpp"
#include "icleval/prompting.hpp"
#include "icleval/remote_backend.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>

namespace icleval {

enum class BackendType { kMock, kRemote };

BackendType parse_backend_type(std::string_view name);

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> mu_mode;
  std::optional<std::filesystem::path> output_dir;
};

// One experiment file. Layout (every block but `dataset` and `backend` optional):
//
//   dataset   name, format, train, eval, text_fields, label, id, classes
//   template  {"preset": "single-text"|"text-pair"} | {"file": path} | inline strings
//   run       K, P, trials, seed, eval_subsample, cache, cache_file, concurrency,
//             permutations ("random"|"exhaustive"), support (fixed ids)
//   backend   type ("mock"|"remote"), mock {...}, remote {...}
//   output    dir
//   analytics mu_mode, z_threshold, set_size
//   verify    tolerance (number or null), sigmas, max_k
//
// Unknown keys are errors. Relative paths resolve against the config file's directory.
struct ExperimentConfig {
  nlohmann::json raw;  // as written, with paths made absolute
  std::filesystem::path base_dir;

  std::string dataset_name;
  FileFormat format = FileFormat::kJsonl;
  std::filesystem::path train_path;
  std::filesystem::path eval_path;
  DatasetSchema schema;

  PromptTemplate tmpl;
  RunConfig run;
  std::optional<std::filesystem::path> cache_file;

  BackendType backend = BackendType::kMock;
  std::optional<MockModelSpec> mock;
  std::optional<RemoteConfig> remote;

  std::filesystem::path output_dir = "out";

  ExemplarMeanMode mu_mode = ExemplarMeanMode::kAtAddition;
  double z_threshold = 1.0;
  std::size_t set_size = 6;

  VerifyTolerance verify_tolerance;
  std::size_t oracle_max_k = 8;
};

// Throws ConfigError listing every problem found, one per line.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                         const ConfigOverrides& overrides = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

Dataset load_experiment_dataset(const ExperimentConfig& config);
std::unique_ptr<Backend> make_backend(const ExperimentConfig& config, const Dataset& dataset);

// Digest of everything that determines the records of a run.
std::string experiment_digest(const ExperimentConfig& config, const Dataset& dataset, const Backend& backend);

}  // namespace icleval
