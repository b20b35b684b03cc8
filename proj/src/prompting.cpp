#include "icleval/prompting.hpp"

#include "icleval/digest.hpp"
#include "icleval/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>

namespace icleval {

namespace {

// Expands `format`, calling `lookup` for each placeholder name. Returns the
// names seen, in order, so validation can count them.
std::vector<std::string> expand(std::string_view format,
                                const std::function<void(std::string_view, std::string&)>& lookup,
                                std::string* out) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < format.size(); ++i) {
    const char c = format[i];
    if (c == '{') {
      if (i + 1 < format.size() && format[i + 1] == '{') {
        if (out) out->push_back('{');
        ++i;
        continue;
      }
      auto close = format.find('}', i + 1);
      if (close == std::string_view::npos) throw ConfigError(fmt::format("template: unclosed '{{' in \"{}\"", format));
      auto name = format.substr(i + 1, close - i - 1);
      if (name.empty()) throw ConfigError(fmt::format("template: empty placeholder in \"{}\"", format));
      names.emplace_back(name);
      if (out) lookup(name, *out);
      i = close;
    } else if (c == '}') {
      if (i + 1 < format.size() && format[i + 1] == '}') ++i;
      if (out) out->push_back('}');
    } else if (out) {
      out->push_back(c);
    }
  }
  return names;
}

std::vector<std::string> placeholders(std::string_view format) { return expand(format, {}, nullptr); }

}  // namespace

void PromptTemplate::validate(std::span<const std::string> field_names) const {
  auto known = [&](const std::string& n) {
    return std::find(field_names.begin(), field_names.end(), n) != field_names.end();
  };
  auto ex = placeholders(exemplar_format);
  if (std::count(ex.begin(), ex.end(), "label") != 1) {
    throw ConfigError("template: exemplar_format must reference {label} exactly once");
  }
  for (const auto& n : ex) {
    if (n != "label" && !known(n)) throw ConfigError(fmt::format("template: unknown placeholder {{{}}} in exemplar_format", n));
  }
  for (const auto& n : placeholders(query_format)) {
    if (n == "label") throw ConfigError("template: query_format must not reference {label}");
    if (!known(n)) throw ConfigError(fmt::format("template: unknown placeholder {{{}}} in query_format", n));
  }
  if (!placeholders(instruction).empty()) throw ConfigError("template: instruction must not contain placeholders");
}

std::string PromptTemplate::digest() const {
  return Sha256()
      .update_field(instruction)
      .update_field(exemplar_format)
      .update_field(query_format)
      .update_field(separator)
      .hex_digest();
}

PromptTemplate single_text_template() {
  return {"", "Sentence: {sentence}\nLabel: {label}", "Sentence: {sentence}\nLabel:", "\n\n"};
}

PromptTemplate text_pair_template() {
  return {"", "{premise}\nQuestion: {hypothesis}\nAnswer: {label}", "{premise}\nQuestion: {hypothesis}\nAnswer:",
          "\n\n"};
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open template file '{}'", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("template '{}': {}", path.string(), e.what()));
  }
  PromptTemplate t;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ConfigError(fmt::format("template: '{}' must be a string", key));
    if (key == "instruction") t.instruction = value.get<std::string>();
    else if (key == "exemplar_format") t.exemplar_format = value.get<std::string>();
    else if (key == "query_format") t.query_format = value.get<std::string>();
    else if (key == "separator") t.separator = value.get<std::string>();
    else throw ConfigError(fmt::format("template: unknown key '{}'", key));
  }
  if (t.exemplar_format.empty() || t.query_format.empty()) {
    throw ConfigError("template: exemplar_format and query_format are required");
  }
  return t;
}

const std::string& verbalize(std::span<const std::string> classes, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes.size()) {
    throw DataError(fmt::format("label {} outside class range [0, {})", label, classes.size()));
  }
  return classes[static_cast<std::size_t>(label)];
}

const std::string& verbalize(const Dataset& dataset, int label) { return verbalize(dataset.classes, label); }

std::string render_exemplar_block(const PromptTemplate& tmpl, std::span<const std::string> classes,
                                  const Exemplar& exemplar) {
  std::string out;
  expand(
      tmpl.exemplar_format,
      [&](std::string_view name, std::string& o) {
        if (name == "label") {
          o += verbalize(classes, exemplar.label);
        } else if (const auto* v = exemplar.field(name)) {
          o += *v;
        } else {
          throw ConfigError(fmt::format("template: unresolvable placeholder {{{}}} for exemplar '{}'", name, exemplar.id));
        }
      },
      &out);
  return out;
}

std::string render_query_block(const PromptTemplate& tmpl, const Exemplar& query) {
  std::string out;
  expand(
      tmpl.query_format,
      [&](std::string_view name, std::string& o) {
        const auto* v = query.field(name);
        if (!v) throw ConfigError(fmt::format("template: unresolvable placeholder {{{}}} for query '{}'", name, query.id));
        o += *v;
      },
      &out);
  return out;
}

RenderedPrompt render(const PromptTemplate& tmpl, std::span<const std::string> classes,
                      std::span<const Exemplar* const> prefix, const Exemplar& query) {
  RenderedPrompt p;
  p.query_id = query.id;
  p.prefix_ids.reserve(prefix.size());
  if (!tmpl.instruction.empty()) {
    p.text += tmpl.instruction;
    p.text += tmpl.separator;
  }
  for (const Exemplar* e : prefix) {
    p.text += render_exemplar_block(tmpl, classes, *e);
    p.text += tmpl.separator;
    p.prefix_ids.push_back(e->id);
  }
  p.text += render_query_block(tmpl, query);
  return p;
}

}  // namespace icleval
