#pragma once

// Chat-completion backends: a remote OpenAI-compatible endpoint and a
// deterministic scripted agent used for verification runs.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "cdg/game.hpp"
#include "cdg/templates.hpp"

namespace cdg {

enum class AgentRole { prover, helpful, misleading, annotator };
enum class Turn { initial, critique, revise, self_correct, annotate, judge };

std::string_view to_string(AgentRole role);
std::string_view to_string(Turn turn);
Turn turn_from_string(std::string_view s);

struct SampleRequest {
  Messages messages;
  SamplingParams params;
  std::string question_id;
  AgentRole role = AgentRole::prover;
  Turn turn = Turn::initial;
};

/// One sampled completion or an explicit failure marker.
struct Completion {
  std::optional<std::string> text;
  std::string failure;

  bool ok() const { return text.has_value(); }
  static Completion success(std::string t) { return {std::move(t), {}}; }
  static Completion failed(std::string why) { return {std::nullopt, std::move(why)}; }
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns exactly request.params.n entries; missing samples are failure
  /// markers. Throws TransportError or ScriptedGapError on hard failures.
  virtual std::vector<Completion> sample(const SampleRequest& request) = 0;
  /// Stable description for manifests.
  virtual nlohmann::json identity() const = 0;
};

std::vector<Completion> sample_completions(Backend& backend, const SampleRequest& request);

/// question id -> raw ground truth, shared by scripted agents.
using AnswerKey = std::unordered_map<std::string, std::string>;

enum class BackendKind { remote, scripted };

struct BackendSpec {
  BackendKind kind = BackendKind::scripted;
  std::optional<std::string> endpoint_url;
  std::string model_name;
  std::string auth_env_var = "CDG_API_KEY";
  double timeout_s = 120.0;
  int max_retries = 3;
  double backoff_s = 0.5;
  int max_in_flight = 8;
  bool send_seed = true;
  std::optional<nlohmann::json> script;

  /// ConfigError when remote lacks endpoint_url or scripted lacks script.
  void validate() const;
};

std::shared_ptr<Backend> make_backend(const BackendSpec& spec, std::shared_ptr<const AnswerKey> answers);

// --- remote ----------------------------------------------------------------

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(BackendSpec spec);
  ~RemoteBackend() override;

  std::vector<Completion> sample(const SampleRequest& request) override;
  nlohmann::json identity() const override;

  /// Request body sent for one call (exposed for wire-format tests).
  nlohmann::json request_body(const SampleRequest& request) const;

 private:
  struct Impl;
  BackendSpec spec_;
  std::unique_ptr<Impl> impl_;
};

// --- scripted --------------------------------------------------------------

/// Deterministic agent driven by a behavior table.
///
/// Script schema (JSON):
///   tag      : string embedded in critiques as "[critic:<tag>]"
///   entries  : [{question_id, turn, role?, texts: [..]}] explicit responses,
///              cycled by sample index
///   rules    : per-turn stochastic rules, drawn from the request seed:
///     initial      {p_correct}
///     critique     {variants}            distinct critique texts per attempt
///     revise       {p_resist, p_fix, p_resist_by_critic{tag:p}, p_fix_by_critic{tag:p}}
///     self_correct {p_keep, p_fix}
///     annotate     {p_garbled}           replies with the first "[flaw]" step
///     judge        {p_accurate, p_unparseable}
///   wrong_answers: {question_id: answer} overrides for incorrect outputs
///
/// A request with neither a matching entry nor a rule for its turn throws
/// ScriptedGapError. Temperature is ignored: outputs depend only on the
/// messages, seed and sample index.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend(nlohmann::json script, std::shared_ptr<const AnswerKey> answers, std::string name = "scripted");

  std::vector<Completion> sample(const SampleRequest& request) override;
  nlohmann::json identity() const override;

  const std::string& tag() const { return tag_; }

 private:
  std::string respond(const SampleRequest& request, int index) const;
  std::string truth_for(const std::string& question_id) const;
  std::string wrong_for(const std::string& question_id) const;
  double rule(Turn turn, const std::string& key, double fallback) const;

  nlohmann::json script_;
  std::shared_ptr<const AnswerKey> answers_;
  std::string name_;
  std::string tag_;
};

/// Scripted solution texts, shared with tests that need to recognise them.
namespace scripted {
inline constexpr std::string_view kFlawSentinel = "[flaw]";
std::string correct_solution(std::string_view answer);
std::string wrong_solution(std::string_view wrong_answer);
std::string critique_text(std::string_view tag, std::string_view intent, int variant);
std::string resist_reply();
std::string revised_reply(std::string_view answer);
/// Answer one larger than `truth` when it is rational, "(truth)+1" otherwise.
std::string default_wrong_answer(std::string_view truth);
}  // namespace scripted

}  // namespace cdg
