#pragma once

// Evaluation protocols: Pass@1 / Maj@k accuracy, stepwise error detection,
// two-round self-correction and prover-vs-critic win-rate matrices. Every
// report keeps per-item records so the aggregates can be recomputed offline.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdg/backends.hpp"
#include "cdg/game.hpp"

namespace cdg {

struct EvalReport {
  std::string task;
  std::map<std::string, double> metrics;
  std::vector<nlohmann::json> per_item;
  std::string config_digest;
  /// Task-specific structured output (win-rate matrices).
  nlohmann::json extra = nlohmann::json::object();
};

struct EvalOptions {
  std::uint64_t run_seed = 0;
  int concurrency_cap = 4;
  /// Majority voting sampling, as used for Maj@k.
  SamplingParams vote_sampling = [] {
    SamplingParams p;
    p.temperature = 0.95;
    p.top_k = 10;
    p.max_tokens = 8192;
    return p;
  }();
  SamplingParams greedy = SamplingParams::greedy();
};

// --- pure scoring ---------------------------------------------------------

/// Pass@1 correctness of a single completion (nullopt = transport failure).
bool score_pass1(const std::optional<std::string>& completion, const CanonicalAnswer& truth);

struct MajorityVote {
  /// Sample index of the winning class representative, nullopt when no
  /// completion had an extractable answer.
  std::optional<std::size_t> winner;
  std::size_t class_size = 0;
  std::size_t classes = 0;
  bool correct = false;
};

/// Groups extractable answers into grader-equivalence classes (first member
/// is the representative); the largest class wins, ties go to the class whose
/// representative has the lowest sample index.
MajorityVote majority_vote(const std::vector<std::optional<std::string>>& completions, const CanonicalAnswer& truth);

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Accuracy and F1 in percent with erroneous_step as the positive class.
std::map<std::string, double> detection_metrics(const ConfusionMatrix& cm);

struct SelfCorrectionCounts {
  std::size_t total = 0;
  std::size_t correct_to_correct = 0;
  std::size_t correct_to_incorrect = 0;
  std::size_t incorrect_to_correct = 0;
  std::size_t incorrect_to_incorrect = 0;
};

/// initial_accuracy, c2i_rate, i2c_rate, overall_correction_rate, all percent.
std::map<std::string, double> self_correction_metrics(const SelfCorrectionCounts& counts);

// --- protocols --------------------------------------------------------------

EvalReport eval_pass1(Backend& backend, const std::vector<Question>& questions, const EvalOptions& options = {});
EvalReport eval_majority(Backend& backend, const std::vector<Question>& questions, int k,
                         const EvalOptions& options = {});

enum class StepLabel { correct_step, erroneous_step };
std::string_view to_string(StepLabel label);

struct ErrorDetectionItem {
  std::string question_id;
  std::string solution_text;
  int step_index = 1;  // 1-based, within split_steps(solution_text)
  StepLabel label = StepLabel::correct_step;
  std::optional<StepLabel> prediction;
};

struct ErrorDetectionBuildOptions {
  int n_samples = 8;
  std::uint64_t run_seed = 0;
  SamplingParams sampling;  // temperature 0.95
  /// Cap per label after balancing; 0 keeps min(positives, negatives).
  std::size_t per_label = 0;
};

struct ErrorDetectionBuild {
  std::vector<ErrorDetectionItem> items;
  std::size_t questions_retained = 0;
  std::size_t annotation_failures = 0;
};

/// Keeps questions with a strict majority of correct samples, labels the
/// first erroneous step of their incorrect samples with the annotator, draws
/// one random step from each correct sample, and balances the two labels.
ErrorDetectionBuild build_error_detection_set(Backend& model, Backend& annotator, const std::vector<Question>& questions,
                                              const ErrorDetectionBuildOptions& options = {});

EvalReport eval_error_detection(Backend& backend, const std::vector<Question>& questions,
                                std::vector<ErrorDetectionItem> items, const EvalOptions& options = {});

EvalReport eval_self_correction(Backend& backend, const std::vector<Question>& questions,
                                const EvalOptions& options = {});

struct NamedBackend {
  std::string name;
  std::shared_ptr<Backend> backend;
};

struct WinRateOptions {
  std::uint64_t run_seed = 0;
  int n_revisions = 4;
  SamplingParams sampling;  // revision and critique sampling
  SamplingParams initial = SamplingParams::greedy();
};

/// Cooperative cells: share of revisions that fix an initially incorrect
/// answer with helpful critic j. Adversarial cells: share of revisions that
/// keep a correct answer against misleading critic j. Each cell is the mean of
/// per-question rates, in percent.
EvalReport eval_winrate_matrix(const std::vector<NamedBackend>& provers,
                               const std::vector<NamedBackend>& helpful_critics,
                               const std::vector<NamedBackend>& misleading_critics,
                               const std::vector<Question>& questions, const WinRateOptions& options = {});

}  // namespace cdg
