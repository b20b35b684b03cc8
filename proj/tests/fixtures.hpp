#pragma once

#include "icleval/corpus.hpp"
#include "icleval/engine.hpp"
#include "icleval/mock_backend.hpp"
#include "icleval/prompting.hpp"
#include "icleval/random.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

namespace icleval::testing {

inline Exemplar make_exemplar(std::string id, std::string sentence, int label) {
  return Exemplar{std::move(id), {{"sentence", std::move(sentence)}}, label};
}

// Deterministic single-text dataset. Train ids "t<i>", eval ids "q<i>".
// Eval labels: the first `eval_gold0` instances are class 0, the rest class 1.
inline Dataset make_dataset(std::size_t n_train, std::size_t n_eval, std::size_t eval_gold0 = 0,
                            std::vector<std::string> classes = {"negative", "positive"}) {
  Dataset d;
  d.name = "fixture";
  d.classes = std::move(classes);
  const auto c = d.classes.size();
  for (std::size_t i = 0; i < n_train; ++i) {
    d.train.push_back(make_exemplar("t" + std::to_string(i), "train sentence " + std::to_string(i),
                                    static_cast<int>((i * 7 + 3) % c)));
  }
  for (std::size_t i = 0; i < n_eval; ++i) {
    d.eval.push_back(make_exemplar("q" + std::to_string(i), "query sentence " + std::to_string(i),
                                   i < eval_gold0 ? 0 : 1));
  }
  return d;
}

inline MockModelSpec mock_spec(MockMode mode, int default_label = 0, std::uint64_t salt = 0) {
  MockModelSpec s;
  s.mode = mode;
  s.default_label = default_label;
  s.salt = salt;
  return s;
}

inline PromptTemplate test_template() { return single_text_template(); }

// Wraps a backend and counts calls, separately for empty prefixes.
class CountingBackend final : public Backend {
 public:
  explicit CountingBackend(const Backend& inner) : inner_(inner) {}
  std::vector<CandidateScore> score(const RenderedPrompt& prompt, std::span<const std::string> classes) const override {
    ++calls;
    if (prompt.prefix_ids.empty()) ++zero_shot_calls;
    return inner_.score(prompt, classes);
  }
  std::string identity() const override { return inner_.identity(); }
  bool deterministic() const override { return inner_.deterministic(); }

  mutable std::atomic<std::size_t> calls{0};
  mutable std::atomic<std::size_t> zero_shot_calls{0};

 private:
  const Backend& inner_;
};

// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("icleval-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes `n` JSONL rows {"idx":..., "sentence":..., "label":...}.
inline void write_jsonl_split(const std::filesystem::path& path, const std::string& prefix, std::size_t n,
                              std::size_t gold0 = 0, bool label_by_index = true) {
  std::ofstream out(path);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = label_by_index ? static_cast<int>((i * 7 + 3) % 2) : (i < gold0 ? 0 : 1);
    out << "{\"idx\": \"" << prefix << i << "\", \"sentence\": \"" << prefix << " sentence " << i
        << "\", \"label\": " << label << "}\n";
  }
}

}  // namespace icleval::testing
