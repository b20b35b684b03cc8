#pragma once

#include "icleval/engine.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>

namespace icleval {

// Records file: the first line is {"provenance": {...}}, then one EvalRecord
// per line:
//   {"trial":0,"perm":3,"k":2,"correct":17,"total":20,"accuracy":0.85,"prefix":["a","b"]}
void write_records(std::ostream& out, const RunArtifact& artifact);
void write_records(const std::filesystem::path& path, const RunArtifact& artifact);
RunArtifact read_records(std::istream& in);
RunArtifact read_records(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const EvalRecord& record);
EvalRecord record_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SupportSet& support);
SupportSet support_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const Provenance& provenance);
Provenance provenance_from_json(const nlohmann::ordered_json& j);

// Append-only file of completed trials, one JSON line each, tagged with the
// experiment digest so a resume never mixes configurations.
class Checkpoint {
 public:
  Checkpoint(std::filesystem::path path, std::string experiment_digest);

  // Completed trials; throws ConfigError if the file belongs to another experiment.
  std::map<int, TrialOutput> load() const;
  void append(const TrialOutput& trial) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::string digest_;
};

}  // namespace icleval
