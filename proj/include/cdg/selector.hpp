#pragma once

// ReST dataset selection: per-role training sets from graded episodes,
// category balancing, cross-round union and DPO pair export.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdg/game.hpp"
#include "cdg/templates.hpp"

namespace cdg {

enum class SampleRole { prover, helpful, misleading };

enum class Category {
  first_try,
  resist,
  corrected,
  critique,
  imitation,
  distillation,
  self_correct_kept,
  self_correct_fixed
};

std::string_view to_string(SampleRole role);
std::string_view to_string(Category category);

struct TrainingSample {
  Messages messages;
  std::string target;
  SampleRole role = SampleRole::prover;
  Category category = Category::first_try;
  int round_added = 1;
  std::string source_episode_id;

  bool operator==(const TrainingSample&) const = default;
};

struct DatasetBundle {
  int round = 1;
  std::vector<TrainingSample> d_prover;
  std::vector<TrainingSample> d_helpful;
  std::vector<TrainingSample> d_misleading;

  std::map<std::string, std::size_t> category_counts() const;
  std::size_t size() const { return d_prover.size() + d_helpful.size() + d_misleading.size(); }

  bool operator==(const DatasetBundle&) const = default;
};

struct SelectionConfig {
  double tau_prover = 0.5;
  double tau_helpful = 0.5;
  double tau_misleading = 0.75;
  ThresholdMode mode = ThresholdMode::at_least;
};

/// Count of successes needed out of `graded`: ceil(tau * graded) in
/// at_least mode, floor(tau * graded) + 1 in exceeding mode.
int required_successes(double tau, int graded, ThresholdMode mode);

/// The questions the episodes refer to, needed to rebuild prompts.
using QuestionIndex = std::map<std::string, Question>;

std::vector<TrainingSample> select_prover_samples(const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                                  const SelectionConfig& config = {});
std::vector<TrainingSample> select_helpful_critiques(const std::vector<Episode>& episodes,
                                                     const QuestionIndex& questions,
                                                     const SelectionConfig& config = {});
std::vector<TrainingSample> select_misleading_critiques(const std::vector<Episode>& episodes,
                                                        const QuestionIndex& questions,
                                                        const SelectionConfig& config = {});

/// Samples from all three selectors, with exact duplicates collapsed.
DatasetBundle select_round(const std::vector<Episode>& episodes, const QuestionIndex& questions, int round,
                           const SelectionConfig& config = {});

/// Uniform subsample without replacement of each listed category down to
/// `cap`; other categories pass through. Output keeps input order.
std::vector<TrainingSample> cap_categories(const std::vector<TrainingSample>& samples,
                                           const std::vector<Category>& categories, std::size_t cap,
                                           std::uint64_t seed);

/// cap_categories over first_try, resist and corrected.
std::vector<TrainingSample> balance_prover_dataset(const std::vector<TrainingSample>& samples, std::size_t cap,
                                                   std::uint64_t seed);

/// Per-role union keyed by exact (messages, target); earlier entries win.
DatasetBundle union_bundles(const DatasetBundle& base, const DatasetBundle& extra);

/// D^t <- D^t ∪ D^{t-1}. SequencingError unless previous.round == current.round - 1.
DatasetBundle merge_rounds(const DatasetBundle& current, const DatasetBundle& previous);

struct PreferencePair {
  Messages messages;
  std::string chosen;
  std::string rejected;
  std::string source_episode_id;

  bool operator==(const PreferencePair&) const = default;
};

/// One (chosen, rejected) pair per (question, solution, critique) context that
/// has both a winning and a losing revision.
std::vector<PreferencePair> export_dpo_pairs(const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                             std::uint64_t seed);

struct AuditFailure {
  std::size_t index;
  std::string reason;
};

/// Checks that every sample traces back to an episode whose grades justify
/// its selection. Empty result means the audit passed.
std::vector<AuditFailure> audit_samples(const std::vector<TrainingSample>& samples,
                                        const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                        const SelectionConfig& config = {});

}  // namespace cdg
