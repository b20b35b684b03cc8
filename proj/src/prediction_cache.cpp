#include "icleval/prediction_cache.hpp"

#include "icleval/digest.hpp"
#include "icleval/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace icleval {

std::string prefix_key(std::string_view template_digest, std::string_view backend_digest,
                       std::span<const std::string> prefix_ids, std::string_view query_id) {
  Sha256 h;
  h.update_field(template_digest).update_field(backend_digest).update_field(std::to_string(prefix_ids.size()));
  for (const auto& id : prefix_ids) h.update_field(id);
  h.update_field(query_id);
  return h.hex_digest();
}

PredictionCache::PredictionCache(const std::filesystem::path& file) {
  if (std::ifstream in(file); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded() || !j.contains("key") || !j.contains("predicted") || !j.contains("scores")) {
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw DataError(fmt::format("cache file '{}' has a corrupt entry", file.string()));
      }
      map_[j["key"].get<std::string>()] = {j["predicted"].get<int>(), j["scores"].get<std::vector<double>>()};
    }
  }
  out_.open(file, std::ios::app);
  if (!out_) throw ConfigError(fmt::format("cannot open cache file '{}'", file.string()));
}

std::optional<CachedPrediction> PredictionCache::find(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void PredictionCache::insert(const std::string& key, const CachedPrediction& value) {
  std::unique_lock lock(mu_);
  map_[key] = value;
  if (out_.is_open()) {
    nlohmann::ordered_json j;
    j["key"] = key;
    j["predicted"] = value.predicted;
    j["scores"] = value.scores;
    out_ << j.dump() << '\n';
    out_.flush();
  }
}

std::size_t PredictionCache::size() const {
  std::shared_lock lock(mu_);
  return map_.size();
}

}  // namespace icleval
