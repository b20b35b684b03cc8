#pragma once

#include "icleval/prompting.hpp"

#include <span>
#include <string>
#include <vector>

namespace icleval {

struct CandidateScore {
  int label = 0;
  double score = 0.0;  // higher is preferred
};

struct Classification {
  int predicted = 0;
  std::vector<CandidateScore> scores;  // sorted by label, one per class
};

// Model backend. Implementations must tolerate concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  // One score per class; the order of the returned list does not matter.
  virtual std::vector<CandidateScore> score(const RenderedPrompt& prompt,
                                            std::span<const std::string> classes) const = 0;
  // Stable description used in cache keys and provenance. Never contains secrets.
  virtual std::string identity() const = 0;
  virtual bool deterministic() const { return false; }
};

// Validates coverage and finiteness, then takes the argmax with ties going
// to the lowest class index.
Classification decide(std::vector<CandidateScore> scores, std::size_t num_classes, const std::string& query_id);

Classification classify(const Backend& backend, const RenderedPrompt& prompt, std::span<const std::string> classes);

}  // namespace icleval
