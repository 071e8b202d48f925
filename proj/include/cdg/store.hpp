#pragma once

// Persistence: schema-versioned JSONL, atomic writes, corpus loading and run
// manifests.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdg/game.hpp"
#include "cdg/serialization.hpp"

namespace cdg {

inline constexpr int kSchemaVersion = 1;

/// Writes to a sibling temp file, then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text(const std::filesystem::path& path);

/// One JSON object per line, each stamped with schema_version.
std::string to_jsonl_line(nlohmann::json record);

struct JsonlReadStats {
  std::size_t records = 0;
  bool truncated_tail = false;
};

/// Parses schema-versioned JSONL. A malformed final line without a trailing
/// newline is treated as a crash artifact: skipped with a warning. Any other
/// malformed line is a ContractError; a foreign schema version is a
/// SchemaVersionError.
std::vector<nlohmann::json> read_jsonl_records(const std::filesystem::path& path, JsonlReadStats* stats = nullptr);

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) out += to_jsonl_line(nlohmann::json(r));
  write_text_atomic(path, out);
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path, JsonlReadStats* stats = nullptr) {
  std::vector<T> out;
  for (auto& j : read_jsonl_records(path, stats)) out.push_back(j.template get<T>());
  return out;
}

/// Append-only JSONL writer used for streaming episodes. Each line is flushed
/// as soon as it is written.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path);
  void append(const nlohmann::json& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Questions from a JSONL corpus ({id, text, ground_truth, split?, source?}).
/// Fails with CorpusLoadError naming the line on malformed input, missing
/// fields, empty ground truth or duplicate ids.
std::vector<Question> load_corpus(const std::filesystem::path& path);

std::string corpus_digest(const std::vector<Question>& questions);

struct RunManifest {
  std::string run_id;
  int round = 1;
  nlohmann::json config;
  std::map<std::string, std::string> template_checksums;
  std::string corpus_digest;
  nlohmann::json backends;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  /// Relative artifact path -> sha256.
  std::map<std::string, std::string> artifacts;
  /// Dataset digests of the previous round's manifest, empty for round 1.
  std::map<std::string, std::string> previous_datasets;
  std::string previous_manifest_sha256;
  nlohmann::json trainer_contract;
  bool sealed = false;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Fills `artifacts` with the digest of each listed file relative to `root`,
/// marks the manifest sealed and writes it atomically. A sealed manifest on
/// disk is never overwritten (ContractError).
void seal_manifest(RunManifest& manifest, const std::filesystem::path& root, const std::vector<std::string>& files,
                   const std::filesystem::path& manifest_path);

std::optional<RunManifest> read_manifest(const std::filesystem::path& path);

/// Recomputes every artifact digest; returns the relative paths that differ.
std::vector<std::string> verify_manifest(const RunManifest& manifest, const std::filesystem::path& root);

std::string utc_timestamp();

}  // namespace cdg
