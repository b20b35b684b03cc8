#pragma once

#include "icleval/scorer.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <unordered_map>

namespace icleval {

enum class MockMode { kLabelBias, kPrefixMajority, kHash };

enum class PinnedEffect { kHelp, kHurt };

// Deterministic stand-in for a language model.
//
//  label-bias       always predicts default_label
//  prefix-majority  majority label of the prefix exemplars; empty prefix or a
//                   tie for the top count falls back to default_label
//  hash             stable hash of (salt, prefix ids in order, query id) mod C
//
// `pinned` exemplars override any mode while they are the most recent
// exemplar of the prefix: kHelp predicts the query's gold label, kHurt
// predicts (gold + 1) mod C. This plants exemplars with extreme
// at-addition accuracy for selection tests.
struct MockModelSpec {
  MockMode mode = MockMode::kHash;
  int default_label = 0;
  std::uint64_t salt = 0;
  std::map<std::string, PinnedEffect> pinned;

  void validate(std::size_t num_classes) const;
  nlohmann::ordered_json to_json() const;
  static MockModelSpec from_json(const nlohmann::json& j);
};

std::string_view to_string(MockMode mode);
MockMode parse_mock_mode(std::string_view name);

using LabelLookup = std::unordered_map<std::string, int>;

LabelLookup label_lookup(const Dataset& dataset);

int mock_classify(const MockModelSpec& spec, std::span<const std::string> prefix_ids, const Exemplar& query,
                  const LabelLookup& labels, std::size_t num_classes);

class MockBackend final : public Backend {
 public:
  MockBackend(MockModelSpec spec, const Dataset& dataset);

  std::vector<CandidateScore> score(const RenderedPrompt& prompt,
                                    std::span<const std::string> classes) const override;
  std::string identity() const override;
  bool deterministic() const override { return true; }

  const MockModelSpec& spec() const { return spec_; }

 private:
  MockModelSpec spec_;
  LabelLookup labels_;
  std::unordered_map<std::string, Exemplar> queries_;
};

}  // namespace icleval
