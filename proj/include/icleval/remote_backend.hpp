#pragma once

#include "icleval/scorer.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>

namespace icleval {

struct RemoteConfig {
  std::string url;  // full completions endpoint, e.g. http://localhost:8000/v1/completions
  std::string model;
  std::string api_key_env;  // name of the env var holding the bearer token; empty disables auth
  int max_in_flight = 8;
  int retries = 4;        // extra attempts after the first on transient failures
  int backoff_ms = 250;   // doubled after every failed attempt
  double timeout_s = 60.0;
  bool length_normalize = false;
  std::string candidate_prefix = " ";
  std::size_t max_prompt_chars = 0;  // 0 disables the context guard
  std::optional<std::filesystem::path> audit_log;

  void validate() const;
};

// Echo-mode completions client. Each candidate is scored by one request for
// prompt + candidate_prefix + verbalization with max_tokens=0, echo=true and
// logprobs; the score is the sum of log-probabilities of the tokens that
// overlap the appended continuation.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  ~RemoteBackend() override;

  std::vector<CandidateScore> score(const RenderedPrompt& prompt,
                                    std::span<const std::string> classes) const override;
  std::string identity() const override;

  // Scores raw continuation strings (no candidate_prefix applied).
  std::vector<CandidateScore> score_remote(const std::string& prompt, std::span<const std::string> candidates) const;

  const RemoteConfig& config() const { return config_; }

  struct Impl;

 private:
  RemoteConfig config_;
  std::unique_ptr<Impl> impl_;
};

// Sums continuation log-probabilities out of a completions response body.
// Exposed for tests; `prompt_chars` is the prompt length in code points.
double continuation_logprob(const std::string& response_body, std::size_t prompt_chars, bool length_normalize);

std::size_t utf8_length(std::string_view text);

}  // namespace icleval
