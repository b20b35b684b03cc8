#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace icleval {

struct CachedPrediction {
  int predicted = 0;
  std::vector<double> scores;  // indexed by class

  bool operator==(const CachedPrediction&) const = default;
};

// Digest of (template digest, backend digest, ordered prefix ids, query id).
// Equal keys mean byte-identical prompts sent to the same backend.
std::string prefix_key(std::string_view template_digest, std::string_view backend_digest,
                       std::span<const std::string> prefix_ids, std::string_view query_id);

// Thread-safe key -> prediction map. When opened on a file it is persisted
// as append-only JSONL:
//   {"key":"<sha256 hex>","predicted":1,"scores":[-2.5,-0.7]}
// Later lines win. A truncated final line (interrupted write) is ignored.
class PredictionCache {
 public:
  PredictionCache() = default;
  explicit PredictionCache(const std::filesystem::path& file);

  std::optional<CachedPrediction> find(const std::string& key) const;
  void insert(const std::string& key, const CachedPrediction& value);
  std::size_t size() const;
  bool persistent() const { return out_.is_open(); }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, CachedPrediction> map_;
  std::ofstream out_;
};

}  // namespace icleval
