#pragma once

// The multi-round loop: collect, select, merge with the previous round,
// balance, export, seal a manifest. Between rounds the loop hands over to an
// external trainer and resumes once the next round's checkpoints are listed
// in the config.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdg/config.hpp"
#include "cdg/selector.hpp"
#include "cdg/store.hpp"

namespace cdg {

struct RoundPaths {
  std::filesystem::path dir;
  std::filesystem::path episodes;
  std::filesystem::path bundle_dir;
  std::filesystem::path export_dir;
  std::filesystem::path manifest;
};

RoundPaths round_paths(const std::filesystem::path& output_dir, int round);

inline constexpr const char* kRoleFiles[] = {"prover", "helpful", "misleading"};

void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle read_bundle(const std::filesystem::path& dir, int round);

SelectionConfig selection_config(const GameConfig& game);

/// Balanced SFT files (export/sft_<role>.jsonl) plus DPO pairs for the round's
/// episodes. Returns paths relative to `round_dir`.
std::vector<std::string> export_round(const std::filesystem::path& round_dir, const DatasetBundle& bundle,
                                      const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                      const RunConfig& config);

/// Training contract recorded in each manifest: retrain every role from the
/// round-1 base checkpoints on the unioned data.
nlohmann::json trainer_contract(const RunConfig& config, int round);

/// Collects round t's episodes into round-t/episodes.jsonl (resumable).
RoundResult run_collect_stage(const RunConfig& config, const std::vector<Question>& questions, int round);

/// Selects from the stored episodes, unions with round t-1's bundle and
/// writes round-t/bundle/. SequencingError when round t-1 has no bundle.
DatasetBundle run_select_stage(const RunConfig& config, const std::vector<Question>& questions, int round);

/// Writes round-t/export/ from the stored bundle and seals the manifest.
RunManifest run_export_stage(const RunConfig& config, const std::vector<Question>& questions, int round);

struct LoopResult {
  std::vector<RunManifest> manifests;
  bool halted = false;
  std::string reason;
};

/// Runs rounds 1..T. Sealed rounds are skipped; a round without configured
/// backends halts the loop with every earlier round intact.
LoopResult run_loop(const RunConfig& config, int T);

QuestionIndex index_by_id(const std::vector<Question>& questions);

}  // namespace cdg
