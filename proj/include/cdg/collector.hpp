#pragma once

// Episode collection at the game's fan-out, plus the imitation, rejection
// sampling and self-correction dataset generators that reuse it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cdg/backends.hpp"
#include "cdg/game.hpp"
#include "cdg/selector.hpp"

namespace cdg {

struct AgentSet {
  std::shared_ptr<Backend> prover;
  std::shared_ptr<Backend> helpful;
  std::shared_ptr<Backend> misleading;
};

struct LoopFilter {
  std::size_t min_period = 64;
  std::size_t min_repeats = 4;
};

struct CollectionPlan {
  int round = 1;
  Fanout fanout;
  SamplingParams sampling;
  AgentSet agents;
  int concurrency_cap = 4;
  std::uint64_t run_seed = 0;
  double eta = 1.0;
  bool dedup_critiques = true;

  void validate() const;
};

/// Runs one question through the full game: n_initial attempts, critiques
/// routed by correctness, n_revisions revisions per critique, grades and
/// rewards. Transport failures become failure markers; an episode whose
/// initial samples all failed comes back with failed = true.
Episode collect_episode(const Question& question, const CollectionPlan& plan);

struct RoundResult {
  std::vector<Episode> episodes;         // in corpus order, including resumed ones
  std::vector<std::string> failed_ids;   // questions whose episode failed
  std::size_t resumed = 0;               // episodes found on disk and skipped
};

/// Collects every question under plan.concurrency_cap questions in flight,
/// appending each episode to `episodes_path` in corpus order. Questions already
/// present in the file are skipped, so a crashed run resumes where it stopped.
RoundResult collect_round(const CollectionPlan& plan, const std::vector<Question>& questions,
                          const std::filesystem::path& episodes_path);

std::vector<TrainingSample> generate_imitation_dataset(std::shared_ptr<Backend> teacher, const CollectionPlan& plan,
                                                       const std::vector<Question>& questions,
                                                       std::size_t target_size);

/// True when some substring of at least `min_period` characters repeats
/// back-to-back `min_repeats` times.
bool has_repetition_loop(std::string_view text, const LoopFilter& filter = {});

struct DistillOptions {
  int n_per_question = 4;
  SamplingParams sampling;  // temperature 0.95 by default
  LoopFilter loop_filter;
  std::uint64_t run_seed = 0;
  int concurrency_cap = 4;
};

/// Keeps sampled solutions that grade correct and contain no repetition loop.
std::vector<TrainingSample> rejection_sample_dataset(Backend& generator, const std::vector<Question>& questions,
                                                     const DistillOptions& options);

struct SelfCorrectionDataOptions {
  int n_per_question = 8;
  std::size_t cap_per_type = 5000;
  SamplingParams sampling;
  LoopFilter loop_filter;
  std::uint64_t run_seed = 0;
};

/// Initial answers at the sampling temperature, greedy self-check, and only
/// final-correct, loop-free checks kept; kept/fixed types balanced to the cap.
std::vector<TrainingSample> build_self_correction_dataset(Backend& model, const std::vector<Question>& questions,
                                                          const SelfCorrectionDataOptions& options);

}  // namespace cdg
