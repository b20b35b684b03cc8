#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace icleval {

struct Exemplar {
  std::string id;
  // Named text segments in schema order (e.g. premise, hypothesis).
  std::vector<std::pair<std::string, std::string>> fields;
  int label = 0;

  const std::string* field(std::string_view name) const;
};

struct Dataset {
  std::string name;
  std::vector<std::string> classes;
  std::vector<Exemplar> train;
  std::vector<Exemplar> eval;

  std::size_t num_classes() const { return classes.size(); }
  // Linear id lookup across both splits; prefer ExemplarIndex in hot paths.
  const Exemplar* find(std::string_view id) const;
};

// id -> exemplar over both splits of a dataset. The dataset must outlive it.
class ExemplarIndex {
 public:
  explicit ExemplarIndex(const Dataset& dataset);
  const Exemplar& at(const std::string& id) const;
  const Exemplar* find(const std::string& id) const;

 private:
  std::unordered_map<std::string, const Exemplar*> by_id_;
};

enum class FileFormat { kJsonl, kCsv };

FileFormat parse_file_format(std::string_view name);
FileFormat infer_file_format(const std::filesystem::path& path);

// Maps source columns/keys onto exemplar fields.
struct DatasetSchema {
  struct TextField {
    std::string name;  // placeholder name used by templates
    std::string key;   // JSON key or CSV header
  };
  std::vector<TextField> text_fields;
  std::string label_key;
  std::optional<std::string> id_key;
  std::vector<std::string> classes;

  // Throws ConfigError when the schema itself is unusable.
  void validate() const;
  std::vector<std::string> field_names() const;
};

// Parses one split file. Without an id_key, ids are "<id_prefix><row index>".
// Labels may be integers, integer strings, or a class verbalization.
std::vector<Exemplar> load_split(const std::filesystem::path& path, FileFormat format,
                                 const DatasetSchema& schema, const std::string& id_prefix);

// Single file -> Dataset whose train split holds every row and eval is empty.
Dataset load_dataset(const std::filesystem::path& path, FileFormat format, const DatasetSchema& schema);

// Train and eval files; ids must be disjoint across them.
Dataset load_dataset(const std::string& name, const std::filesystem::path& train_path,
                     const std::filesystem::path& eval_path, FileFormat format,
                     const DatasetSchema& schema);

// Checks every Dataset invariant; throws DataError naming the offending id.
void validate_dataset(const Dataset& dataset);

// Replaces eval with min(n, |eval|) uniformly drawn instances, kept in their
// original relative order. n >= |eval| returns the dataset unchanged.
Dataset subsample_eval(const Dataset& dataset, std::size_t n, std::uint64_t seed);

struct SupportSet {
  int trial = 0;
  std::vector<std::string> members;  // in draw order
  std::uint64_t seed = 0;            // per-trial seed actually used

  bool operator==(const SupportSet&) const = default;
};

// K distinct train exemplars; the draw depends only on (train ids, K, trial, seed).
SupportSet sample_support(const Dataset& dataset, std::size_t k, int trial, std::uint64_t seed);

// Text field names of the dataset (taken from its first exemplar).
std::vector<std::string> text_field_names(const Dataset& dataset);

std::string dataset_digest(const Dataset& dataset);

}  // namespace icleval
