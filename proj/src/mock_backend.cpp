#include "icleval/mock_backend.hpp"

#include "icleval/digest.hpp"
#include "icleval/error.hpp"
#include "icleval/random.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace icleval {

std::string_view to_string(MockMode mode) {
  switch (mode) {
    case MockMode::kLabelBias: return "label-bias";
    case MockMode::kPrefixMajority: return "prefix-majority";
    case MockMode::kHash: return "hash";
  }
  return "hash";
}

MockMode parse_mock_mode(std::string_view name) {
  if (name == "label-bias") return MockMode::kLabelBias;
  if (name == "prefix-majority") return MockMode::kPrefixMajority;
  if (name == "hash") return MockMode::kHash;
  throw ConfigError(fmt::format("unknown mock mode '{}' (label-bias, prefix-majority, hash)", name));
}

void MockModelSpec::validate(std::size_t num_classes) const {
  if (default_label < 0 || static_cast<std::size_t>(default_label) >= num_classes) {
    throw ConfigError(fmt::format("mock: default_label {} outside class range [0, {})", default_label, num_classes));
  }
}

nlohmann::ordered_json MockModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(mode));
  j["default_label"] = default_label;
  j["salt"] = salt;
  nlohmann::ordered_json pins = nlohmann::ordered_json::object();
  for (const auto& [id, effect] : pinned) pins[id] = effect == PinnedEffect::kHelp ? "help" : "hurt";
  j["pinned"] = pins;
  return j;
}

MockModelSpec MockModelSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("mock: spec must be an object");
  MockModelSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") {
      if (!value.is_string()) throw ConfigError("mock.mode must be a string");
      s.mode = parse_mock_mode(value.get<std::string>());
    } else if (key == "default_label") {
      if (!value.is_number_integer()) throw ConfigError("mock.default_label must be an integer");
      s.default_label = value.get<int>();
    } else if (key == "salt") {
      if (!value.is_number_integer()) throw ConfigError("mock.salt must be an integer");
      s.salt = value.get<std::uint64_t>();
    } else if (key == "pinned") {
      if (!value.is_object()) throw ConfigError("mock.pinned must map exemplar ids to \"help\" or \"hurt\"");
      for (const auto& [id, effect] : value.items()) {
        if (effect == "help") s.pinned[id] = PinnedEffect::kHelp;
        else if (effect == "hurt") s.pinned[id] = PinnedEffect::kHurt;
        else throw ConfigError(fmt::format("mock.pinned['{}'] must be \"help\" or \"hurt\"", id));
      }
    } else {
      throw ConfigError(fmt::format("mock: unknown key '{}'", key));
    }
  }
  return s;
}

LabelLookup label_lookup(const Dataset& dataset) {
  LabelLookup labels;
  for (const auto& e : dataset.train) labels.emplace(e.id, e.label);
  for (const auto& e : dataset.eval) labels.emplace(e.id, e.label);
  return labels;
}

int mock_classify(const MockModelSpec& spec, std::span<const std::string> prefix_ids, const Exemplar& query,
                  const LabelLookup& labels, std::size_t num_classes) {
  const int c = static_cast<int>(num_classes);
  if (!prefix_ids.empty()) {
    if (auto it = spec.pinned.find(prefix_ids.back()); it != spec.pinned.end()) {
      return it->second == PinnedEffect::kHelp ? query.label : (query.label + 1) % c;
    }
  }
  switch (spec.mode) {
    case MockMode::kLabelBias:
      return spec.default_label;
    case MockMode::kPrefixMajority: {
      std::vector<int> counts(num_classes, 0);
      for (const auto& id : prefix_ids) {
        auto it = labels.find(id);
        if (it == labels.end()) throw DataError(fmt::format("mock: unknown prefix exemplar '{}'", id));
        ++counts[static_cast<std::size_t>(it->second)];
      }
      auto top = std::max_element(counts.begin(), counts.end());
      if (*top == 0 || std::count(counts.begin(), counts.end(), *top) > 1) return spec.default_label;
      return static_cast<int>(top - counts.begin());
    }
    case MockMode::kHash: {
      // FNV-1a alone keeps byte parity in its low bits; splitmix64 chaining makes the
      // result depend on every id and its position.
      std::uint64_t h = splitmix64(spec.salt);
      for (const auto& id : prefix_ids) h = splitmix64(h ^ fnv1a64(id));
      h = splitmix64(h ^ splitmix64(fnv1a64(query.id)));
      return static_cast<int>(h % num_classes);
    }
  }
  return spec.default_label;
}

MockBackend::MockBackend(MockModelSpec spec, const Dataset& dataset)
    : spec_(std::move(spec)), labels_(label_lookup(dataset)) {
  spec_.validate(dataset.num_classes());
  for (const auto& e : dataset.eval) queries_.emplace(e.id, e);
  for (const auto& e : dataset.train) queries_.emplace(e.id, e);
}

std::vector<CandidateScore> MockBackend::score(const RenderedPrompt& prompt,
                                               std::span<const std::string> classes) const {
  auto it = queries_.find(prompt.query_id);
  if (it == queries_.end()) throw DataError(fmt::format("mock: unknown query '{}'", prompt.query_id));
  const int predicted = mock_classify(spec_, prompt.prefix_ids, it->second, labels_, classes.size());
  std::vector<CandidateScore> scores;
  scores.reserve(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    scores.push_back({static_cast<int>(c), static_cast<int>(c) == predicted ? 0.0 : -1.0});
  }
  return scores;
}

std::string MockBackend::identity() const { return "mock:" + spec_.to_json().dump(); }

}  // namespace icleval
