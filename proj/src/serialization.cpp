#include "cdg/serialization.hpp"

#include <fmt/format.h>

#include "cdg/errors.hpp"

namespace cdg {

using nlohmann::json;

namespace {

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

}  // namespace

Intent intent_from_string(std::string_view s) {
  if (s == "helpful") return Intent::helpful;
  if (s == "misleading") return Intent::misleading;
  throw ContractError(fmt::format("unknown intent '{}'", s));
}

std::string_view to_string(SampleRole role) {
  switch (role) {
    case SampleRole::prover: return "prover";
    case SampleRole::helpful: return "helpful";
    case SampleRole::misleading: return "misleading";
  }
  return "prover";
}

SampleRole sample_role_from_string(std::string_view s) {
  if (s == "prover") return SampleRole::prover;
  if (s == "helpful") return SampleRole::helpful;
  if (s == "misleading") return SampleRole::misleading;
  throw ContractError(fmt::format("unknown sample role '{}'", s));
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::first_try: return "first_try";
    case Category::resist: return "resist";
    case Category::corrected: return "corrected";
    case Category::critique: return "critique";
    case Category::imitation: return "imitation";
    case Category::distillation: return "distillation";
    case Category::self_correct_kept: return "self_correct_kept";
    case Category::self_correct_fixed: return "self_correct_fixed";
  }
  return "first_try";
}

Category category_from_string(std::string_view s) {
  for (auto c : {Category::first_try, Category::resist, Category::corrected, Category::critique, Category::imitation,
                 Category::distillation, Category::self_correct_kept, Category::self_correct_fixed}) {
    if (to_string(c) == s) return c;
  }
  throw ContractError(fmt::format("unknown category '{}'", s));
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::at_least ? "at_least" : "exceeding";
}

ThresholdMode threshold_mode_from_string(std::string_view s) {
  if (s == "at_least") return ThresholdMode::at_least;
  if (s == "exceeding") return ThresholdMode::exceeding;
  throw ConfigError(fmt::format("threshold_mode must be at_least or exceeding, got '{}'", s));
}

void to_json(json& j, const ChatMessage& m) { j = {{"role", to_string(m.role)}, {"content", m.content}}; }

void from_json(const json& j, ChatMessage& m) {
  m.role = chat_role_from_string(j.at("role").get<std::string>());
  m.content = j.at("content").get<std::string>();
}

void to_json(json& j, const SamplingParams& p) {
  j = {{"temperature", p.temperature}, {"top_p", p.top_p}, {"top_k", p.top_k}, {"max_tokens", p.max_tokens},
       {"n", p.n}};
  j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
}

void from_json(const json& j, SamplingParams& p) {
  get_opt(j, "temperature", p.temperature);
  get_opt(j, "top_p", p.top_p);
  get_opt(j, "top_k", p.top_k);
  get_opt(j, "max_tokens", p.max_tokens);
  get_opt(j, "n", p.n);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) p.seed = it->get<std::uint64_t>();
}

void to_json(json& j, const Attempt& a) {
  j = {{"text", a.text},
       {"extracted_answer", a.extracted_answer ? json(*a.extracted_answer) : json(nullptr)},
       {"is_correct", a.is_correct},
       {"resisted", a.resisted},
       {"failed", a.failed},
       {"failure", a.failure},
       {"sample_index", a.sample_index},
       {"gen_params", a.gen_params}};
}

void from_json(const json& j, Attempt& a) {
  a.text = j.at("text").get<std::string>();
  if (auto it = j.find("extracted_answer"); it != j.end() && !it->is_null()) a.extracted_answer = it->get<std::string>();
  a.is_correct = j.at("is_correct").get<bool>();
  get_opt(j, "resisted", a.resisted);
  get_opt(j, "failed", a.failed);
  get_opt(j, "failure", a.failure);
  get_opt(j, "sample_index", a.sample_index);
  get_opt(j, "gen_params", a.gen_params);
}

void to_json(json& j, const RevisionStats& s) {
  j = {{"n_revisions", s.n_revisions}, {"n_correct", s.n_correct}, {"n_resisted", s.n_resisted},
       {"n_misled", s.n_misled},       {"n_failed", s.n_failed}};
}

void from_json(const json& j, RevisionStats& s) {
  j.at("n_revisions").get_to(s.n_revisions);
  j.at("n_correct").get_to(s.n_correct);
  j.at("n_resisted").get_to(s.n_resisted);
  j.at("n_misled").get_to(s.n_misled);
  j.at("n_failed").get_to(s.n_failed);
}

void to_json(json& j, const Critique& c) {
  j = {{"text", c.text},
       {"intent", to_string(c.intent)},
       {"target_solution_index", c.target_solution_index},
       {"sample_index", c.sample_index},
       {"revision_stats", c.revision_stats},
       {"revisions", c.revisions}};
}

void from_json(const json& j, Critique& c) {
  c.text = j.at("text").get<std::string>();
  c.intent = intent_from_string(j.at("intent").get<std::string>());
  j.at("target_solution_index").get_to(c.target_solution_index);
  get_opt(j, "sample_index", c.sample_index);
  j.at("revision_stats").get_to(c.revision_stats);
  j.at("revisions").get_to(c.revisions);
}

void to_json(json& j, const AttemptRecord& r) {
  j = {{"initial", r.initial},
       {"assigned_intent", to_string(r.assigned_intent)},
       {"critiques", r.critiques},
       {"critiques_requested", r.critiques_requested},
       {"critique_failures", r.critique_failures},
       {"critique_duplicates", r.critique_duplicates}};
}

void from_json(const json& j, AttemptRecord& r) {
  j.at("initial").get_to(r.initial);
  r.assigned_intent = intent_from_string(j.at("assigned_intent").get<std::string>());
  j.at("critiques").get_to(r.critiques);
  get_opt(j, "critiques_requested", r.critiques_requested);
  get_opt(j, "critique_failures", r.critique_failures);
  get_opt(j, "critique_duplicates", r.critique_duplicates);
}

void to_json(json& j, const RoleRewards& r) {
  j = {{"prover", r.prover}, {"helpful", r.helpful}, {"misleading", r.misleading}, {"eta", r.eta}};
}

void from_json(const json& j, RoleRewards& r) {
  j.at("prover").get_to(r.prover);
  j.at("helpful").get_to(r.helpful);
  j.at("misleading").get_to(r.misleading);
  get_opt(j, "eta", r.eta);
}

void to_json(json& j, const Episode& e) {
  j = {{"id", e.id},         {"question_id", e.question_id}, {"round", e.round},
       {"failed", e.failed}, {"rewards", e.rewards},         {"attempts", e.attempts}};
}

void from_json(const json& j, Episode& e) {
  j.at("id").get_to(e.id);
  j.at("question_id").get_to(e.question_id);
  j.at("round").get_to(e.round);
  get_opt(j, "failed", e.failed);
  j.at("rewards").get_to(e.rewards);
  j.at("attempts").get_to(e.attempts);
}

void to_json(json& j, const Fanout& f) {
  j = {{"n_initial", f.n_initial},
       {"n_helpful_critiques", f.n_helpful_critiques},
       {"n_misleading_critiques", f.n_misleading_critiques},
       {"n_revisions", f.n_revisions}};
}

void from_json(const json& j, Fanout& f) {
  get_opt(j, "n_initial", f.n_initial);
  get_opt(j, "n_helpful_critiques", f.n_helpful_critiques);
  get_opt(j, "n_misleading_critiques", f.n_misleading_critiques);
  get_opt(j, "n_revisions", f.n_revisions);
}

void to_json(json& j, const GameConfig& c) {
  j = {{"eta", c.eta},
       {"tau_prover", c.tau_prover},
       {"tau_helpful", c.tau_helpful},
       {"tau_misleading", c.tau_misleading},
       {"threshold_mode", to_string(c.threshold_mode)},
       {"fanout", c.fanout},
       {"sampling", c.sampling},
       {"balance_cap", c.balance_cap}};
}

void from_json(const json& j, GameConfig& c) {
  get_opt(j, "eta", c.eta);
  get_opt(j, "tau_prover", c.tau_prover);
  get_opt(j, "tau_helpful", c.tau_helpful);
  get_opt(j, "tau_misleading", c.tau_misleading);
  if (auto it = j.find("threshold_mode"); it != j.end()) c.threshold_mode = threshold_mode_from_string(it->get<std::string>());
  get_opt(j, "fanout", c.fanout);
  get_opt(j, "sampling", c.sampling);
  get_opt(j, "balance_cap", c.balance_cap);
}

void to_json(json& j, const Question& q) {
  j = {{"id", q.id},
       {"text", q.text},
       {"ground_truth", q.ground_truth},
       {"split", q.split == Split::train ? "train" : "test"},
       {"source", q.source}};
}

void from_json(const json& j, Question& q) {
  std::string split = j.value("split", "train");
  if (split != "train" && split != "test") throw ContractError("split must be train or test, got '" + split + "'");
  const auto& text = j.contains("text") ? j.at("text") : j.at("question");
  q = make_question(j.at("id").get<std::string>(), text.get<std::string>(),
                    j.at("ground_truth").get<std::string>(), split == "train" ? Split::train : Split::test,
                    j.value("source", ""));
}

void to_json(json& j, const TrainingSample& s) {
  j = {{"messages", s.messages},
       {"target", s.target},
       {"role", to_string(s.role)},
       {"category", to_string(s.category)},
       {"round_added", s.round_added},
       {"source_episode_id", s.source_episode_id}};
}

void from_json(const json& j, TrainingSample& s) {
  j.at("messages").get_to(s.messages);
  j.at("target").get_to(s.target);
  s.role = sample_role_from_string(j.at("role").get<std::string>());
  s.category = category_from_string(j.at("category").get<std::string>());
  j.at("round_added").get_to(s.round_added);
  get_opt(j, "source_episode_id", s.source_episode_id);
}

void to_json(json& j, const PreferencePair& p) {
  j = {{"messages", p.messages}, {"chosen", p.chosen}, {"rejected", p.rejected},
       {"source_episode_id", p.source_episode_id}};
}

void from_json(const json& j, PreferencePair& p) {
  j.at("messages").get_to(p.messages);
  j.at("chosen").get_to(p.chosen);
  j.at("rejected").get_to(p.rejected);
  get_opt(j, "source_episode_id", p.source_episode_id);
}

void to_json(json& j, const BackendSpec& s) {
  j = {{"kind", s.kind == BackendKind::remote ? "remote" : "scripted"},
       {"model_name", s.model_name},
       {"auth_env_var", s.auth_env_var},
       {"timeout_s", s.timeout_s},
       {"max_retries", s.max_retries},
       {"backoff_s", s.backoff_s},
       {"max_in_flight", s.max_in_flight},
       {"send_seed", s.send_seed}};
  if (s.endpoint_url) j["endpoint_url"] = *s.endpoint_url;
  if (s.script) j["script"] = *s.script;
}

void from_json(const json& j, BackendSpec& s) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "remote") {
    s.kind = BackendKind::remote;
  } else if (kind == "scripted") {
    s.kind = BackendKind::scripted;
  } else {
    throw ConfigError("backend kind must be remote or scripted, got '" + kind + "'");
  }
  if (auto it = j.find("endpoint_url"); it != j.end() && !it->is_null()) s.endpoint_url = it->get<std::string>();
  get_opt(j, "model_name", s.model_name);
  get_opt(j, "auth_env_var", s.auth_env_var);
  get_opt(j, "timeout_s", s.timeout_s);
  get_opt(j, "max_retries", s.max_retries);
  get_opt(j, "backoff_s", s.backoff_s);
  get_opt(j, "max_in_flight", s.max_in_flight);
  get_opt(j, "send_seed", s.send_seed);
  if (auto it = j.find("script"); it != j.end() && !it->is_null()) s.script = *it;
}

void to_json(json& j, const ErrorDetectionItem& item) {
  j = {{"question_id", item.question_id},
       {"solution_text", item.solution_text},
       {"step_index", item.step_index},
       {"label", to_string(item.label)}};
  j["prediction"] = item.prediction ? json(to_string(*item.prediction)) : json(nullptr);
}

void from_json(const json& j, ErrorDetectionItem& item) {
  auto label = [](const std::string& s) {
    if (s == "correct_step") return StepLabel::correct_step;
    if (s == "erroneous_step") return StepLabel::erroneous_step;
    throw ContractError("unknown step label '" + s + "'");
  };
  j.at("question_id").get_to(item.question_id);
  j.at("solution_text").get_to(item.solution_text);
  j.at("step_index").get_to(item.step_index);
  item.label = label(j.at("label").get<std::string>());
  if (auto it = j.find("prediction"); it != j.end() && !it->is_null()) item.prediction = label(it->get<std::string>());
}

void to_json(json& j, const EvalReport& r) {
  j = {{"task", r.task}, {"metrics", r.metrics}, {"config_digest", r.config_digest}, {"extra", r.extra}};
}

}  // namespace cdg
