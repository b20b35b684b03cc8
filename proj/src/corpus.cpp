#include "icleval/corpus.hpp"

#include "icleval/csv.hpp"
#include "icleval/digest.hpp"
#include "icleval/error.hpp"
#include "icleval/random.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_set>

namespace icleval {

using nlohmann::json;

const std::string* Exemplar::field(std::string_view name) const {
  for (const auto& [key, value] : fields) {
    if (key == name) return &value;
  }
  return nullptr;
}

const Exemplar* Dataset::find(std::string_view id) const {
  for (const auto* split : {&train, &eval}) {
    for (const auto& e : *split) {
      if (e.id == id) return &e;
    }
  }
  return nullptr;
}

ExemplarIndex::ExemplarIndex(const Dataset& dataset) {
  by_id_.reserve(dataset.train.size() + dataset.eval.size());
  for (const auto& e : dataset.train) by_id_.emplace(e.id, &e);
  for (const auto& e : dataset.eval) by_id_.emplace(e.id, &e);
}

const Exemplar* ExemplarIndex::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : it->second;
}

const Exemplar& ExemplarIndex::at(const std::string& id) const {
  if (const auto* e = find(id)) return *e;
  throw DataError(fmt::format("unknown exemplar id '{}'", id));
}

FileFormat parse_file_format(std::string_view name) {
  if (name == "jsonl") return FileFormat::kJsonl;
  if (name == "csv") return FileFormat::kCsv;
  throw ConfigError(fmt::format("unknown dataset format '{}' (expected jsonl or csv)", name));
}

FileFormat infer_file_format(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::kCsv : FileFormat::kJsonl;
}

void DatasetSchema::validate() const {
  if (text_fields.empty()) throw ConfigError("schema: at least one text field is required");
  if (label_key.empty()) throw ConfigError("schema: label field is required");
  if (classes.empty()) throw ConfigError("schema: classes list must be non-empty");
  std::unordered_set<std::string> seen;
  for (const auto& f : text_fields) {
    if (f.name.empty() || f.key.empty()) throw ConfigError("schema: text field with empty name or key");
    if (f.name == "label") throw ConfigError("schema: 'label' is reserved for the verbalized label");
    if (!seen.insert(f.name).second) throw ConfigError(fmt::format("schema: duplicate text field '{}'", f.name));
  }
}

std::vector<std::string> DatasetSchema::field_names() const {
  std::vector<std::string> names;
  for (const auto& f : text_fields) names.push_back(f.name);
  return names;
}

namespace {

// Row content after format-specific extraction; nullopt means the key is absent.
struct RawRow {
  std::size_t line;
  std::vector<std::optional<std::string>> texts;
  std::optional<std::string> label;
  bool label_is_number = false;
  long long label_number = 0;
  std::optional<std::string> id;
};

std::optional<std::string> json_scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_null()) return std::nullopt;
  return v.dump();
}

std::vector<RawRow> read_jsonl(std::istream& in, const DatasetSchema& schema) {
  std::vector<RawRow> rows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("line {}: malformed JSON ({})", line, e.what()));
    }
    if (!obj.is_object()) throw DataError(fmt::format("line {}: expected a JSON object", line));
    RawRow row{line, {}, {}, false, 0, {}};
    for (const auto& f : schema.text_fields) {
      auto it = obj.find(f.key);
      row.texts.push_back(it == obj.end() ? std::nullopt : json_scalar_to_string(*it));
    }
    if (auto it = obj.find(schema.label_key); it != obj.end()) {
      if (it->is_number_integer()) {
        row.label_is_number = true;
        row.label_number = it->get<long long>();
        row.label = std::to_string(row.label_number);
      } else if (it->is_string()) {
        row.label = it->get<std::string>();
      } else {
        throw DataError(fmt::format("line {}: label '{}' must be an integer or string", line, schema.label_key));
      }
    }
    if (schema.id_key) {
      if (auto it = obj.find(*schema.id_key); it != obj.end()) row.id = json_scalar_to_string(*it);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawRow> read_csv(std::istream& in, const DatasetSchema& schema) {
  auto table = csv::read_all(in);
  if (table.empty()) return {};
  const auto& header = table.front().cells;
  auto column = [&](const std::string& key) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), key);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::optional<std::size_t>> text_cols;
  for (const auto& f : schema.text_fields) text_cols.push_back(column(f.key));
  auto label_col = column(schema.label_key);
  std::optional<std::size_t> id_col = schema.id_key ? column(*schema.id_key) : std::nullopt;
  if (!label_col) throw DataError(fmt::format("csv header lacks label column '{}'", schema.label_key));

  std::vector<RawRow> rows;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& cells = table[r].cells;
    if (cells.size() != header.size()) {
      throw DataError(fmt::format("line {}: expected {} cells, found {}", table[r].line, header.size(), cells.size()));
    }
    RawRow row{table[r].line, {}, {}, false, 0, {}};
    for (const auto& col : text_cols) row.texts.push_back(col ? std::optional(cells[*col]) : std::nullopt);
    row.label = cells[*label_col];
    if (id_col) row.id = cells[*id_col];
    rows.push_back(std::move(row));
  }
  return rows;
}

int resolve_label(const RawRow& row, const DatasetSchema& schema, const std::string& id) {
  if (!row.label) throw DataError(fmt::format("line {}: missing label field '{}'", row.line, schema.label_key));
  long long value = 0;
  bool numeric = row.label_is_number;
  if (numeric) {
    value = row.label_number;
  } else {
    const auto& s = *row.label;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    numeric = ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
    if (!numeric) {
      auto it = std::find(schema.classes.begin(), schema.classes.end(), s);
      if (it == schema.classes.end()) {
        throw DataError(fmt::format("exemplar '{}': label '{}' is not a declared class", id, s));
      }
      return static_cast<int>(it - schema.classes.begin());
    }
  }
  if (value < 0 || value >= static_cast<long long>(schema.classes.size())) {
    throw DataError(fmt::format("exemplar '{}': label {} outside class range [0, {})", id, value,
                                schema.classes.size()));
  }
  return static_cast<int>(value);
}

}  // namespace

std::vector<Exemplar> load_split(const std::filesystem::path& path, FileFormat format,
                                 const DatasetSchema& schema, const std::string& id_prefix) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open dataset file '{}'", path.string()));
  auto rows = format == FileFormat::kJsonl ? read_jsonl(in, schema) : read_csv(in, schema);
  if (rows.empty()) throw DataError(fmt::format("{}: no records", path.string()));

  std::vector<Exemplar> out;
  out.reserve(rows.size());
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    Exemplar e;
    if (schema.id_key) {
      if (!row.id || row.id->empty()) {
        throw DataError(fmt::format("line {}: missing id field '{}'", row.line, *schema.id_key));
      }
      e.id = *row.id;
    } else {
      e.id = id_prefix + std::to_string(i);
    }
    bool any_text = false;
    for (std::size_t f = 0; f < schema.text_fields.size(); ++f) {
      if (!row.texts[f]) {
        throw DataError(fmt::format("line {}: missing text field '{}'", row.line, schema.text_fields[f].key));
      }
      any_text = any_text || !row.texts[f]->empty();
      e.fields.emplace_back(schema.text_fields[f].name, *row.texts[f]);
    }
    if (!any_text) throw DataError(fmt::format("line {}: exemplar '{}' has no non-empty text field", row.line, e.id));
    e.label = resolve_label(row, schema, e.id);
    if (!ids.insert(e.id).second) throw DataError(fmt::format("line {}: duplicate id '{}'", row.line, e.id));
    out.push_back(std::move(e));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format, const DatasetSchema& schema) {
  Dataset d;
  d.name = path.stem().string();
  d.classes = schema.classes;
  d.train = load_split(path, format, schema, "");
  return d;
}

Dataset load_dataset(const std::string& name, const std::filesystem::path& train_path,
                     const std::filesystem::path& eval_path, FileFormat format,
                     const DatasetSchema& schema) {
  Dataset d;
  d.name = name;
  d.classes = schema.classes;
  d.train = load_split(train_path, format, schema, "train-");
  d.eval = load_split(eval_path, format, schema, "eval-");
  validate_dataset(d);
  return d;
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.classes.empty()) throw DataError("dataset declares no classes");
  std::unordered_set<std::string> ids;
  for (const auto* split : {&dataset.train, &dataset.eval}) {
    for (const auto& e : *split) {
      if (e.label < 0 || static_cast<std::size_t>(e.label) >= dataset.classes.size()) {
        throw DataError(fmt::format("exemplar '{}': label {} outside class range", e.id, e.label));
      }
      if (!ids.insert(e.id).second) {
        throw DataError(fmt::format("exemplar id '{}' is not unique across train and eval", e.id));
      }
      bool any_text = std::any_of(e.fields.begin(), e.fields.end(), [](const auto& f) { return !f.second.empty(); });
      if (!any_text) throw DataError(fmt::format("exemplar '{}' has no non-empty text field", e.id));
    }
  }
}

Dataset subsample_eval(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("eval subsample size must be >= 1");
  if (n >= dataset.eval.size()) return dataset;
  Rng rng(derive_seed(seed, SeedStream::kEvalSubsample));
  auto picked = rng.sample_without_replacement(dataset.eval.size(), n);
  std::sort(picked.begin(), picked.end());
  Dataset out;
  out.name = dataset.name;
  out.classes = dataset.classes;
  out.train = dataset.train;
  out.eval.reserve(n);
  for (std::size_t i : picked) out.eval.push_back(dataset.eval[i]);
  return out;
}

SupportSet sample_support(const Dataset& dataset, std::size_t k, int trial, std::uint64_t seed) {
  if (k > dataset.train.size()) {
    throw ConfigError(fmt::format("support size K={} exceeds train split size {}", k, dataset.train.size()));
  }
  SupportSet s;
  s.trial = trial;
  s.seed = derive_seed(seed, SeedStream::kSupport, {static_cast<std::uint64_t>(trial)});
  Rng rng(s.seed);
  for (std::size_t i : rng.sample_without_replacement(dataset.train.size(), k)) {
    s.members.push_back(dataset.train[i].id);
  }
  return s;
}

std::vector<std::string> text_field_names(const Dataset& dataset) {
  const auto& split = dataset.train.empty() ? dataset.eval : dataset.train;
  std::vector<std::string> names;
  if (!split.empty()) {
    for (const auto& f : split.front().fields) names.push_back(f.first);
  }
  return names;
}

std::string dataset_digest(const Dataset& dataset) {
  Sha256 h;
  h.update_field(dataset.name);
  h.update_field(std::to_string(dataset.classes.size()));
  for (const auto& c : dataset.classes) h.update_field(c);
  for (const auto* split : {&dataset.train, &dataset.eval}) {
    h.update_field(std::to_string(split->size()));
    for (const auto& e : *split) {
      h.update_field(e.id);
      h.update_field(std::to_string(e.label));
      h.update_field(std::to_string(e.fields.size()));
      for (const auto& [name, text] : e.fields) {
        h.update_field(name);
        h.update_field(text);
      }
    }
  }
  return h.hex_digest();
}

}  // namespace icleval
