#include "icleval/scorer.hpp"

#include "icleval/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace icleval {

Classification decide(std::vector<CandidateScore> scores, std::size_t num_classes, const std::string& query_id) {
  if (num_classes < 2) throw ConfigError("classification needs at least two classes");
  if (scores.size() != num_classes) {
    throw ProtocolError(fmt::format("query '{}': backend returned {} scores for {} classes", query_id, scores.size(),
                                    num_classes));
  }
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (scores[c].label != static_cast<int>(c)) {
      throw ProtocolError(fmt::format("query '{}': scores do not cover every class exactly once", query_id));
    }
    if (!std::isfinite(scores[c].score)) {
      throw ProtocolError(fmt::format("query '{}': non-finite score for class {}", query_id, c));
    }
  }
  Classification out;
  out.predicted = 0;
  for (std::size_t c = 1; c < num_classes; ++c) {
    if (scores[c].score > scores[static_cast<std::size_t>(out.predicted)].score) out.predicted = static_cast<int>(c);
  }
  out.scores = std::move(scores);
  return out;
}

Classification classify(const Backend& backend, const RenderedPrompt& prompt, std::span<const std::string> classes) {
  return decide(backend.score(prompt, classes), classes.size(), prompt.query_id);
}

}  // namespace icleval
