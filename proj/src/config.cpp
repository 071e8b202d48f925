#include "cdg/config.hpp"

#include <fmt/format.h>

#include "cdg/errors.hpp"
#include "cdg/serialization.hpp"
#include "cdg/store.hpp"

namespace cdg {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  game.validate();
  if (concurrency_cap < 1) throw ConfigError("concurrency_cap must be >= 1");
  if (corpus.empty()) throw ConfigError("config needs a corpus path");
  if (!rounds.count(1)) throw ConfigError("config needs backends for round 1");
  for (const auto& [t, r] : rounds) {
    if (t < 1) throw ConfigError(fmt::format("round index {} must be >= 1", t));
    r.prover.validate();
    r.helpful.validate();
    r.misleading.validate();
  }
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    c.run_id = doc.value("run_id", c.run_id);
    c.run_seed = doc.value("run_seed", c.run_seed);
    c.concurrency_cap = doc.value("concurrency_cap", c.concurrency_cap);
    c.dedup_critiques = doc.value("dedup_critiques", c.dedup_critiques);
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    if (doc.contains("corpus")) c.corpus = resolve(doc.at("corpus").get<std::string>());
    if (doc.contains("output_dir")) c.output_dir = resolve(doc.at("output_dir").get<std::string>());
    if (doc.contains("game")) doc.at("game").get_to(c.game);
    if (doc.contains("rounds")) {
      for (const auto& [key, value] : doc.at("rounds").items()) {
        int t = 0;
        try {
          t = std::stoi(key);
        } catch (const std::exception&) {
          throw ConfigError("round key '" + key + "' is not an integer");
        }
        RoundBackends r;
        value.at("prover").get_to(r.prover);
        value.at("helpful").get_to(r.helpful);
        value.at("misleading").get_to(r.misleading);
        c.rounds[t] = std::move(r);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path, const json& overrides) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  doc.merge_patch(overrides);
  return parse_run_config(doc, path.parent_path());
}

json config_snapshot(const RunConfig& c) {
  json rounds = json::object();
  for (const auto& [t, r] : c.rounds) {
    rounds[std::to_string(t)] = {{"prover", r.prover}, {"helpful", r.helpful}, {"misleading", r.misleading}};
  }
  return {{"run_id", c.run_id},
          {"run_seed", c.run_seed},
          {"corpus", c.corpus.filename().string()},
          {"concurrency_cap", c.concurrency_cap},
          {"dedup_critiques", c.dedup_critiques},
          {"game", c.game},
          {"rounds", rounds}};
}

AgentSet make_agents(const RoundBackends& specs, std::shared_ptr<const AnswerKey> answers) {
  return {make_backend(specs.prover, answers), make_backend(specs.helpful, answers),
          make_backend(specs.misleading, answers)};
}

std::shared_ptr<const AnswerKey> answer_key(const std::vector<Question>& questions) {
  auto key = std::make_shared<AnswerKey>();
  for (const auto& q : questions) (*key)[q.id] = q.ground_truth;
  return key;
}

}  // namespace cdg
