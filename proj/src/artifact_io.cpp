#include "icleval/artifact_io.hpp"

#include "icleval/error.hpp"

#include <fmt/format.h>

#include <fstream>

namespace icleval {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const EvalRecord& r) {
  ordered_json j;
  j["trial"] = r.trial;
  j["perm"] = r.perm;
  j["k"] = r.k;
  j["correct"] = r.correct;
  j["total"] = r.total;
  j["accuracy"] = r.accuracy();
  j["prefix"] = r.prefix_ids;
  return j;
}

EvalRecord record_from_json(const json& j) {
  try {
    EvalRecord r;
    r.trial = j.at("trial").get<int>();
    r.perm = j.at("perm").get<int>();
    r.k = j.at("k").get<int>();
    r.correct = j.at("correct").get<std::size_t>();
    r.total = j.at("total").get<std::size_t>();
    r.prefix_ids = j.at("prefix").get<std::vector<std::string>>();
    if (r.correct > r.total) throw DataError("correct exceeds total");
    if (r.prefix_ids.size() != static_cast<std::size_t>(r.k)) throw DataError("prefix length differs from k");
    return r;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed record: {}", e.what()));
  }
}

ordered_json to_json(const SupportSet& s) {
  ordered_json j;
  j["trial"] = s.trial;
  j["seed"] = s.seed;
  j["members"] = s.members;
  return j;
}

SupportSet support_from_json(const json& j) {
  return SupportSet{j.at("trial").get<int>(), j.at("members").get<std::vector<std::string>>(),
                    j.at("seed").get<std::uint64_t>()};
}

ordered_json to_json(const Provenance& p) {
  ordered_json j;
  j["config_digest"] = p.config_digest;
  j["dataset_digest"] = p.dataset_digest;
  j["template_digest"] = p.template_digest;
  j["backend"] = p.backend_identity;
  j["run"] = p.run;
  j["eval_ids"] = p.eval_ids;
  ordered_json sets = ordered_json::array();
  for (const auto& s : p.support_sets) sets.push_back(to_json(s));
  j["support_sets"] = sets;
  return j;
}

Provenance provenance_from_json(const ordered_json& j) {
  try {
    Provenance p;
    p.config_digest = j.at("config_digest").get<std::string>();
    p.dataset_digest = j.at("dataset_digest").get<std::string>();
    p.template_digest = j.at("template_digest").get<std::string>();
    p.backend_identity = j.at("backend").get<std::string>();
    p.run = j.at("run");
    p.eval_ids = j.at("eval_ids").get<std::vector<std::string>>();
    for (const auto& s : j.at("support_sets")) p.support_sets.push_back(support_from_json(s));
    return p;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed provenance: {}", e.what()));
  }
}

void write_records(std::ostream& out, const RunArtifact& artifact) {
  ordered_json header;
  header["provenance"] = to_json(artifact.provenance);
  out << header.dump() << '\n';
  for (const auto& r : artifact.records) out << to_json(r).dump() << '\n';
}

void write_records(const std::filesystem::path& path, const RunArtifact& artifact) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  write_records(out, artifact);
}

RunArtifact read_records(std::istream& in) {
  RunArtifact artifact;
  std::string line;
  std::size_t n = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(fmt::format("records line {}: malformed JSON", n));
    if (!have_header) {
      if (!j.contains("provenance")) throw DataError("records file must start with a provenance line");
      // Re-parsed in insertion order so the run block round-trips unchanged.
      artifact.provenance = provenance_from_json(ordered_json::parse(line).at("provenance"));
      have_header = true;
      continue;
    }
    try {
      artifact.records.push_back(record_from_json(j));
    } catch (const DataError& e) {
      throw DataError(fmt::format("records line {}: {}", n, e.what()));
    }
  }
  if (!have_header) throw DataError("records file is empty");
  return artifact;
}

RunArtifact read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open records file '{}'", path.string()));
  return read_records(in);
}

Checkpoint::Checkpoint(std::filesystem::path path, std::string experiment_digest)
    : path_(std::move(path)), digest_(std::move(experiment_digest)) {}

std::map<int, TrialOutput> Checkpoint::load() const {
  std::map<int, TrialOutput> done;
  std::ifstream in(path_);
  if (!in) return done;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) break;  // interrupted final write
    if (j.value("experiment", "") != digest_) {
      throw ConfigError(fmt::format("checkpoint '{}' belongs to a different experiment configuration", path_.string()));
    }
    TrialOutput t;
    t.support = support_from_json(j.at("support"));
    for (const auto& r : j.at("records")) t.records.push_back(record_from_json(r));
    done[t.support.trial] = std::move(t);
  }
  return done;
}

void Checkpoint::append(const TrialOutput& trial) const {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw ConfigError(fmt::format("cannot write checkpoint '{}'", path_.string()));
  ordered_json j;
  j["experiment"] = digest_;
  j["support"] = to_json(trial.support);
  ordered_json records = ordered_json::array();
  for (const auto& r : trial.records) records.push_back(to_json(r));
  j["records"] = records;
  out << j.dump() << '\n';
}

}  // namespace icleval
