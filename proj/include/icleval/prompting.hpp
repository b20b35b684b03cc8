#pragma once

#include "icleval/corpus.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace icleval {

// Placeholders are `{field}` and `{label}`; `{{` and `}}` emit literal braces.
struct PromptTemplate {
  std::string instruction;
  std::string exemplar_format;
  std::string query_format;
  std::string separator = "\n\n";

  // Checks placeholder rules against the dataset's text field names.
  void validate(std::span<const std::string> field_names) const;
  std::string digest() const;
};

// Defaults for the two task shapes. Field names: `sentence`, or `premise` + `hypothesis`.
PromptTemplate single_text_template();
PromptTemplate text_pair_template();

PromptTemplate load_template(const std::filesystem::path& path);

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> prefix_ids;
  std::string query_id;
};

const std::string& verbalize(std::span<const std::string> classes, int label);
const std::string& verbalize(const Dataset& dataset, int label);

std::string render_exemplar_block(const PromptTemplate& tmpl, std::span<const std::string> classes,
                                  const Exemplar& exemplar);
std::string render_query_block(const PromptTemplate& tmpl, const Exemplar& query);

// instruction, each exemplar block, then the query block, joined by the
// separator. An empty instruction contributes no block. Byte-exact.
RenderedPrompt render(const PromptTemplate& tmpl, std::span<const std::string> classes,
                      std::span<const Exemplar* const> prefix, const Exemplar& query);

}  // namespace icleval
