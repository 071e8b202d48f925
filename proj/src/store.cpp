#include "cdg/store.hpp"

#include <chrono>
#include <ctime>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cdg/digest.hpp"
#include "cdg/errors.hpp"

namespace cdg {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string to_jsonl_line(json record) {
  record["schema_version"] = kSchemaVersion;
  return record.dump() + "\n";
}

std::vector<json> read_jsonl_records(const fs::path& path, JsonlReadStats* stats) {
  const std::string data = read_text(path);
  std::vector<json> out;
  JsonlReadStats local;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    const bool terminated = end != std::string::npos;
    if (!terminated) end = data.size();
    std::string_view line(data.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      if (!terminated) {
        spdlog::warn("{}: ignoring truncated final line {}", path.string(), line_no);
        local.truncated_tail = true;
        break;
      }
      throw ContractError(fmt::format("{}:{}: malformed JSON line", path.string(), line_no));
    }
    auto it = j.find("schema_version");
    int version = (it != j.end() && it->is_number_integer()) ? it->get<int>() : 0;
    if (version != kSchemaVersion) {
      throw SchemaVersionError(fmt::format("{}:{}: schema_version {} is not supported (expected {})", path.string(),
                                           line_no, version, kSchemaVersion));
    }
    j.erase("schema_version");
    out.push_back(std::move(j));
  }
  local.records = out.size();
  if (stats) *stats = local;
  return out;
}

JsonlAppender::JsonlAppender(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open " + path.string() + " for appending");
}

void JsonlAppender::append(const json& record) {
  out_ << to_jsonl_line(record);
  out_.flush();
  if (!out_) throw Error("append to " + path_.string() + " failed");
}

std::vector<Question> load_corpus(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusLoadError("cannot open corpus " + path.string(), 0);
  std::vector<Question> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return CorpusLoadError(fmt::format("{}:{}: {}", path.string(), line_no, why), line_no);
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw fail("malformed JSON");
    for (const char* key : {"id", "ground_truth"}) {
      if (!j.contains(key) || !j[key].is_string()) throw fail(fmt::format("missing string field '{}'", key));
    }
    if (!(j.contains("text") && j["text"].is_string()) && !(j.contains("question") && j["question"].is_string())) {
      throw fail("missing string field 'text'");
    }
    if (j["ground_truth"].get<std::string>().empty()) throw fail("empty ground_truth");
    Question q;
    try {
      q = j.get<Question>();
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
    if (!seen.insert(q.id).second) throw fail("duplicate id '" + q.id + "'");
    out.push_back(std::move(q));
  }
  return out;
}

std::string corpus_digest(const std::vector<Question>& questions) {
  std::string buf;
  for (const auto& q : questions) buf += json(q).dump() + "\n";
  return sha256_hex(buf);
}

void to_json(json& j, const RunManifest& m) {
  j = {{"run_id", m.run_id},
       {"round", m.round},
       {"config", m.config},
       {"template_checksums", m.template_checksums},
       {"corpus_digest", m.corpus_digest},
       {"backends", m.backends},
       {"seed", m.seed},
       {"started_at", m.started_at},
       {"finished_at", m.finished_at},
       {"artifacts", m.artifacts},
       {"previous_datasets", m.previous_datasets},
       {"previous_manifest_sha256", m.previous_manifest_sha256},
       {"trainer_contract", m.trainer_contract},
       {"sealed", m.sealed},
       {"schema_version", kSchemaVersion}};
}

void from_json(const json& j, RunManifest& m) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw SchemaVersionError(fmt::format("manifest schema_version {} is not supported", j.value("schema_version", 0)));
  }
  j.at("run_id").get_to(m.run_id);
  j.at("round").get_to(m.round);
  m.config = j.value("config", json::object());
  j.at("template_checksums").get_to(m.template_checksums);
  j.at("corpus_digest").get_to(m.corpus_digest);
  m.backends = j.value("backends", json::object());
  j.at("seed").get_to(m.seed);
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  j.at("artifacts").get_to(m.artifacts);
  j.at("previous_datasets").get_to(m.previous_datasets);
  m.previous_manifest_sha256 = j.value("previous_manifest_sha256", "");
  m.trainer_contract = j.value("trainer_contract", json::object());
  m.sealed = j.value("sealed", false);
}

void seal_manifest(RunManifest& manifest, const fs::path& root, const std::vector<std::string>& files,
                   const fs::path& manifest_path) {
  if (auto existing = read_manifest(manifest_path); existing && existing->sealed) {
    throw ContractError("manifest " + manifest_path.string() + " is sealed");
  }
  manifest.artifacts.clear();
  for (const auto& rel : files) manifest.artifacts[rel] = sha256_file(root / rel);
  manifest.finished_at = utc_timestamp();
  manifest.sealed = true;
  write_text_atomic(manifest_path, json(manifest).dump(2) + "\n");
}

std::optional<RunManifest> read_manifest(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw ContractError("malformed manifest " + path.string());
  return j.get<RunManifest>();
}

std::vector<std::string> verify_manifest(const RunManifest& manifest, const fs::path& root) {
  std::vector<std::string> bad;
  for (const auto& [rel, digest] : manifest.artifacts) {
    if (!fs::exists(root / rel) || sha256_file(root / rel) != digest) bad.push_back(rel);
  }
  return bad;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace cdg
