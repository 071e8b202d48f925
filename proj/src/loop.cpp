#include "cdg/loop.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cdg/digest.hpp"
#include "cdg/errors.hpp"
#include "cdg/serialization.hpp"
#include "cdg/templates.hpp"

namespace cdg {

namespace fs = std::filesystem;
using nlohmann::json;

RoundPaths round_paths(const fs::path& output_dir, int round) {
  RoundPaths p;
  p.dir = output_dir / fmt::format("round-{}", round);
  p.episodes = p.dir / "episodes.jsonl";
  p.bundle_dir = p.dir / "bundle";
  p.export_dir = p.dir / "export";
  p.manifest = p.dir / "manifest.json";
  return p;
}

void write_bundle(const fs::path& dir, const DatasetBundle& bundle) {
  write_jsonl(dir / "prover.jsonl", bundle.d_prover);
  write_jsonl(dir / "helpful.jsonl", bundle.d_helpful);
  write_jsonl(dir / "misleading.jsonl", bundle.d_misleading);
}

DatasetBundle read_bundle(const fs::path& dir, int round) {
  DatasetBundle b;
  b.round = round;
  b.d_prover = read_jsonl<TrainingSample>(dir / "prover.jsonl");
  b.d_helpful = read_jsonl<TrainingSample>(dir / "helpful.jsonl");
  b.d_misleading = read_jsonl<TrainingSample>(dir / "misleading.jsonl");
  return b;
}

SelectionConfig selection_config(const GameConfig& game) {
  return {game.tau_prover, game.tau_helpful, game.tau_misleading, game.threshold_mode};
}

QuestionIndex index_by_id(const std::vector<Question>& questions) {
  QuestionIndex out;
  for (const auto& q : questions) out.emplace(q.id, q);
  return out;
}

std::vector<std::string> export_round(const fs::path& round_dir, const DatasetBundle& bundle,
                                      const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                      const RunConfig& config) {
  auto balanced = balance_prover_dataset(bundle.d_prover, static_cast<std::size_t>(config.game.balance_cap),
                                         derive_seed(config.run_seed, "balance", "prover", bundle.round));
  write_jsonl(round_dir / "export" / "sft_prover.jsonl", balanced);
  write_jsonl(round_dir / "export" / "sft_helpful.jsonl", bundle.d_helpful);
  write_jsonl(round_dir / "export" / "sft_misleading.jsonl", bundle.d_misleading);
  write_jsonl(round_dir / "export" / "dpo_prover.jsonl",
              export_dpo_pairs(episodes, questions, derive_seed(config.run_seed, "dpo", "prover", bundle.round)));
  return {"export/sft_prover.jsonl", "export/sft_helpful.jsonl", "export/sft_misleading.jsonl",
          "export/dpo_prover.jsonl"};
}

json trainer_contract(const RunConfig& config, int round) {
  const bool first = round == 1;
  const double lr = first ? 5e-6 : 1e-6;
  const int batch = first ? 32 : 256;
  json base = json::object();
  if (auto it = config.rounds.find(1); it != config.rounds.end()) {
    base = {{"prover", it->second.prover}, {"helpful", it->second.helpful}, {"misleading", it->second.misleading}};
  }
  return {{"produces_round", round + 1},
          {"retrain_from", "round_1_base"},
          {"base_checkpoints", base},
          {"system_prompt", nullptr},
          {"loss", "language-modeling loss on target tokens only"},
          {"roles",
           {{"prover", {{"dataset", "export/sft_prover.jsonl"}, {"learning_rate", lr}, {"batch_size", batch}, {"epochs", 1}}},
            {"helpful", {{"dataset", "export/sft_helpful.jsonl"}, {"learning_rate", lr}, {"batch_size", batch}, {"epochs", 2}}},
            {"misleading",
             {{"dataset", "export/sft_misleading.jsonl"}, {"learning_rate", lr}, {"batch_size", batch}, {"epochs", 1}}}}}};
}

namespace {

AgentSet round_agents(const RunConfig& config, const std::vector<Question>& questions, int t) {
  auto it = config.rounds.find(t);
  if (it == config.rounds.end()) throw ConfigError(fmt::format("no backends configured for round {}", t));
  return make_agents(it->second, answer_key(questions));
}

std::vector<Episode> stored_episodes(const fs::path& path) {
  if (!fs::exists(path)) throw SequencingError("no episodes at " + path.string() + "; run collect first");
  return read_jsonl<Episode>(path);
}

}  // namespace

RoundResult run_collect_stage(const RunConfig& config, const std::vector<Question>& questions, int t) {
  CollectionPlan plan;
  plan.round = t;
  plan.fanout = config.game.fanout;
  plan.sampling = config.game.sampling;
  plan.agents = round_agents(config, questions, t);
  plan.concurrency_cap = config.concurrency_cap;
  plan.run_seed = config.run_seed;
  plan.eta = config.game.eta;
  plan.dedup_critiques = config.dedup_critiques;
  auto round = collect_round(plan, questions, round_paths(config.output_dir, t).episodes);
  spdlog::info("round {}: {} episodes ({} resumed, {} failed)", t, round.episodes.size(), round.resumed,
               round.failed_ids.size());
  if (!questions.empty() && round.episodes.empty()) {
    throw TransportError(fmt::format("round {}: every episode failed; rerun to resume", t), 0);
  }
  return round;
}

DatasetBundle run_select_stage(const RunConfig& config, const std::vector<Question>& questions, int t) {
  const auto paths = round_paths(config.output_dir, t);
  DatasetBundle bundle =
      select_round(stored_episodes(paths.episodes), index_by_id(questions), t, selection_config(config.game));
  if (t > 1) {
    auto prev = round_paths(config.output_dir, t - 1);
    if (!fs::exists(prev.bundle_dir / "prover.jsonl")) {
      throw SequencingError(fmt::format("round {} has no bundle to merge into round {}", t - 1, t));
    }
    bundle = merge_rounds(bundle, read_bundle(prev.bundle_dir, t - 1));
  }
  write_bundle(paths.bundle_dir, bundle);
  return bundle;
}

RunManifest run_export_stage(const RunConfig& config, const std::vector<Question>& questions, int t) {
  const auto paths = round_paths(config.output_dir, t);
  const auto qindex = index_by_id(questions);
  if (!fs::exists(paths.bundle_dir / "prover.jsonl")) {
    throw SequencingError(fmt::format("round {} has not been selected yet", t));
  }
  auto episodes = stored_episodes(paths.episodes);
  auto bundle = read_bundle(paths.bundle_dir, t);
  auto agents = round_agents(config, questions, t);

  RunManifest manifest;
  manifest.run_id = config.run_id;
  manifest.round = t;
  manifest.started_at = utc_timestamp();
  manifest.config = config_snapshot(config);
  manifest.template_checksums = template_checksums();
  manifest.corpus_digest = corpus_digest(questions);
  manifest.seed = config.run_seed;
  manifest.backends = {{"prover", agents.prover->identity()},
                       {"helpful", agents.helpful->identity()},
                       {"misleading", agents.misleading->identity()}};
  if (t > 1) {
    auto prev = round_paths(config.output_dir, t - 1);
    auto prev_manifest = read_manifest(prev.manifest);
    if (!prev_manifest || !prev_manifest->sealed) {
      throw SequencingError(fmt::format("round {} manifest is not sealed", t - 1));
    }
    for (const auto& [rel, digest] : prev_manifest->artifacts) {
      if (rel.rfind("bundle/", 0) == 0 || rel.rfind("export/", 0) == 0) manifest.previous_datasets[rel] = digest;
    }
    manifest.previous_manifest_sha256 = sha256_file(prev.manifest);
  }

  std::vector<std::string> files = {"episodes.jsonl", "bundle/prover.jsonl", "bundle/helpful.jsonl",
                                    "bundle/misleading.jsonl"};
  for (auto& f : export_round(paths.dir, bundle, episodes, qindex, config)) files.push_back(std::move(f));
  manifest.trainer_contract = trainer_contract(config, t);
  seal_manifest(manifest, paths.dir, files, paths.manifest);
  spdlog::info("round {}: sealed; prover {} / helpful {} / misleading {} samples", t, bundle.d_prover.size(),
               bundle.d_helpful.size(), bundle.d_misleading.size());
  return manifest;
}

LoopResult run_loop(const RunConfig& config, int T) {
  config.validate();
  if (T < 1) throw ConfigError("T must be >= 1");
  const auto questions = load_corpus(config.corpus);

  LoopResult result;
  for (int t = 1; t <= T; ++t) {
    const auto paths = round_paths(config.output_dir, t);
    if (auto sealed = read_manifest(paths.manifest); sealed && sealed->sealed) {
      if (auto bad = verify_manifest(*sealed, paths.dir); !bad.empty()) {
        throw ContractError(fmt::format("round {} artifact {} does not match its sealed digest", t, bad.front()));
      }
      spdlog::info("round {}: sealed, skipping", t);
      result.manifests.push_back(*sealed);
      continue;
    }
    if (!config.rounds.count(t)) {
      result.halted = true;
      result.reason = fmt::format("no checkpoints configured for round {}; train on round {} exports and add them", t,
                                  t - 1);
      spdlog::info("{}", result.reason);
      break;
    }
    run_collect_stage(config, questions, t);
    run_select_stage(config, questions, t);
    result.manifests.push_back(run_export_stage(config, questions, t));
  }
  return result;
}

}  // namespace cdg
