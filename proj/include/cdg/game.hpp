#pragma once

// Domain model of the critic-discernment game: a prover answers, a critic
// whose intent depends on the answer's correctness critiques it, and the
// prover revises or resists.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdg/grader.hpp"

namespace cdg {

enum class Split { train, test };

struct Question {
  std::string id;
  std::string text;
  std::string ground_truth;
  Split split = Split::train;
  std::string source;
  /// Filled once at load time by make_question / load_corpus.
  CanonicalAnswer truth;
};

Question make_question(std::string id, std::string text, std::string ground_truth,
                       Split split = Split::train, std::string source = {});

struct SamplingParams {
  double temperature = 0.95;
  double top_p = 0.95;
  int top_k = 5;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
  int n = 1;

  static SamplingParams greedy(int max_tokens = 4096) {
    SamplingParams p;
    p.temperature = 0.0;
    p.top_p = 1.0;
    p.top_k = 1;
    p.max_tokens = max_tokens;
    return p;
  }

  bool operator==(const SamplingParams&) const = default;
};

enum class Intent { helpful, misleading };

struct Attempt {
  std::string text;
  std::optional<std::string> extracted_answer;
  bool is_correct = false;
  bool resisted = false;
  /// Transport or generation failure; failed attempts carry no text and are
  /// left out of every denominator.
  bool failed = false;
  std::string failure;
  int sample_index = 0;
  SamplingParams gen_params;

  bool operator==(const Attempt&) const = default;
};

struct RevisionStats {
  int n_revisions = 0;  // graded (non-failed) revisions
  int n_correct = 0;
  int n_resisted = 0;
  /// Revisions without the resist marker whose answer is wrong.
  int n_misled = 0;
  int n_failed = 0;

  bool operator==(const RevisionStats&) const = default;
};

struct Critique {
  std::string text;
  Intent intent = Intent::helpful;
  int target_solution_index = 0;
  int sample_index = 0;
  RevisionStats revision_stats;
  std::vector<Attempt> revisions;

  bool operator==(const Critique&) const = default;
};

struct AttemptRecord {
  Attempt initial;
  Intent assigned_intent = Intent::helpful;
  std::vector<Critique> critiques;
  int critiques_requested = 0;
  int critique_failures = 0;
  int critique_duplicates = 0;

  bool operator==(const AttemptRecord&) const = default;
};

struct RoleRewards {
  double prover = 0.0;
  double helpful = 0.0;
  double misleading = 0.0;
  double eta = 1.0;

  bool operator==(const RoleRewards&) const = default;
};

struct Episode {
  std::string id;
  std::string question_id;
  int round = 1;
  std::vector<AttemptRecord> attempts;
  RoleRewards rewards;
  bool failed = false;

  bool operator==(const Episode&) const = default;
};

struct Fanout {
  int n_initial = 4;
  int n_helpful_critiques = 8;
  int n_misleading_critiques = 4;
  int n_revisions = 4;

  bool operator==(const Fanout&) const = default;
};

enum class ThresholdMode { at_least, exceeding };

struct GameConfig {
  double eta = 1.0;
  double tau_prover = 0.5;
  double tau_helpful = 0.5;
  double tau_misleading = 0.75;
  ThresholdMode threshold_mode = ThresholdMode::at_least;
  Fanout fanout;
  SamplingParams sampling;
  int balance_cap = 10000;

  /// Throws ConfigError when thresholds leave [0,1] or a fan-out count is < 1.
  void validate() const;
};

Intent assign_critic_intent(bool attempt_correct);

enum class Outcome {
  first_try_win,
  resisted,
  misled,
  corrected,
  uncorrected,
  resist_but_wrong_path
};

std::string_view to_string(Outcome outcome);
std::string_view to_string(Intent intent);

/// FIRST_TRY_WIN for a correct initial attempt, nothing otherwise.
std::optional<Outcome> classify_initial(const Attempt& initial);

/// Outcome of one revision. A marker-carrying revision of a correct attempt
/// that still grades incorrect is RESIST_BUT_WRONG_PATH: selection counts it
/// as a resist, the reward does not.
Outcome classify_outcome(const Attempt& initial, const Attempt& revision);

/// Grades a revision against the truth. When the last boxed region is the
/// resist marker the prover keeps its initial answer, so correctness is
/// inherited from the initial attempt.
Attempt grade_revision(std::string text, const Attempt& initial, const CanonicalAnswer& truth,
                       int sample_index = 0);
Attempt grade_attempt(std::string text, const CanonicalAnswer& truth, int sample_index = 0);

RevisionStats tally_revisions(const std::vector<Attempt>& revisions);

// Rewards replace each expectation by an empirical mean: over revisions of a
// critique, then over critiques of an attempt, then over attempts. Failed
// revisions, critiques with no graded revision and failed attempts are
// excluded from the means.

double compute_prover_reward(const Episode& episode, double eta);
double compute_helpful_reward(const Episode& episode);
double compute_misleading_reward(const Episode& episode);
RoleRewards compute_rewards(const Episode& episode, double eta);

/// Per-critique success rates. Throw RoleMismatchError on the wrong intent.
double helpful_critique_reward(const Critique& critique);
double misleading_critique_reward(const Critique& critique);

}  // namespace cdg
