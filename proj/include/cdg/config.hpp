#pragma once

// Run configuration: one declarative JSON file, overridable from the CLI.
//
// {
//   "run_id": "toy",
//   "run_seed": 7,
//   "corpus": "questions.jsonl",          // relative to the config file
//   "output_dir": "runs/toy",             // relative to the config file
//   "concurrency_cap": 4,
//   "dedup_critiques": true,
//   "game": { "eta": 1.0, "tau_prover": 0.5, "tau_helpful": 0.5, "tau_misleading": 0.75,
//             "threshold_mode": "at_least", "balance_cap": 10000,
//             "fanout": {...}, "sampling": {...} },
//   "rounds": { "1": { "prover": <backend>, "helpful": <backend>, "misleading": <backend> },
//               "2": { ... } }
// }
//
// A backend is {"kind": "remote"|"scripted", "endpoint_url", "model_name",
// "auth_env_var", "timeout_s", "max_retries", "backoff_s", "max_in_flight",
// "send_seed", "script"}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "json.hpp"

#include "cdg/backends.hpp"
#include "cdg/collector.hpp"
#include "cdg/game.hpp"

namespace cdg {

struct RoundBackends {
  BackendSpec prover;
  BackendSpec helpful;
  BackendSpec misleading;
};

struct RunConfig {
  std::string run_id = "run";
  std::uint64_t run_seed = 0;
  std::filesystem::path corpus;
  std::filesystem::path output_dir = "runs";
  int concurrency_cap = 4;
  bool dedup_critiques = true;
  GameConfig game;
  std::map<int, RoundBackends> rounds;

  void validate() const;
};

/// Parses a config document; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Reads `path`, deep-merges `overrides` on top (RFC 7386), then parses.
RunConfig load_run_config(const std::filesystem::path& path, const nlohmann::json& overrides = nlohmann::json::object());

/// Effective configuration, as frozen into manifests.
nlohmann::json config_snapshot(const RunConfig& config);

AgentSet make_agents(const RoundBackends& specs, std::shared_ptr<const AnswerKey> answers);

std::shared_ptr<const AnswerKey> answer_key(const std::vector<Question>& questions);

}  // namespace cdg
