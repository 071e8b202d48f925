#include "cdg/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cdg/digest.hpp"
#include "cdg/errors.hpp"
#include "cdg/parallel.hpp"
#include "cdg/serialization.hpp"

namespace cdg {

using nlohmann::json;

namespace {

SamplingParams seeded(SamplingParams p, int n, std::uint64_t seed) {
  p.n = n;
  p.seed = seed;
  return p;
}

std::vector<Completion> safe_sample(Backend& backend, const SampleRequest& req) {
  try {
    return sample_completions(backend, req);
  } catch (const TransportError& e) {
    spdlog::warn("question {}: {}", req.question_id, e.what());
    return std::vector<Completion>(static_cast<std::size_t>(req.params.n), Completion::failed(e.what()));
  }
}

std::optional<std::string> text_of(const Completion& c) { return c.text; }

std::string digest_of(const json& j) { return sha256_hex(j.dump()); }

json options_json(const EvalOptions& o) {
  return {{"run_seed", o.run_seed}, {"vote_sampling", o.vote_sampling}, {"greedy", o.greedy}};
}

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

const std::map<std::string, const Question*> index_questions(const std::vector<Question>& questions) {
  std::map<std::string, const Question*> out;
  for (const auto& q : questions) out[q.id] = &q;
  return out;
}

// Shared by Pass@1 and Maj@k so that k=1 sees the very same completion.
std::uint64_t solve_seed(std::uint64_t run_seed, const std::string& qid) {
  return derive_seed(run_seed, qid, "solve");
}

}  // namespace

bool score_pass1(const std::optional<std::string>& completion, const CanonicalAnswer& truth) {
  return completion && is_correct(*completion, truth);
}

MajorityVote majority_vote(const std::vector<std::optional<std::string>>& completions, const CanonicalAnswer& truth) {
  struct Class {
    std::size_t representative;
    CanonicalAnswer answer;
    std::size_t size;
  };
  std::vector<Class> classes;
  for (std::size_t i = 0; i < completions.size(); ++i) {
    if (!completions[i]) continue;
    auto ex = extract_final_answer(*completions[i]);
    if (!ex || ex->kind == AnswerKind::unparsed || ex->kind == AnswerKind::marker) continue;
    auto canon = canonicalize(ex->raw);
    auto it = std::find_if(classes.begin(), classes.end(),
                           [&](const Class& c) { return answers_equivalent(c.answer, canon); });
    if (it == classes.end()) {
      classes.push_back({i, std::move(canon), 1});
    } else {
      ++it->size;
    }
  }
  MajorityVote vote;
  vote.classes = classes.size();
  const Class* best = nullptr;
  for (const auto& c : classes) {
    if (!best || c.size > best->size) best = &c;  // classes are in first-seen order
  }
  if (best) {
    vote.winner = best->representative;
    vote.class_size = best->size;
    vote.correct = answers_equivalent(best->answer, truth);
  }
  return vote;
}

std::map<std::string, double> detection_metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.tp + cm.fp + cm.fn + cm.tn;
  return {
      {"accuracy", percent(cm.tp + cm.tn, total)},
      {"f1", percent(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn)},
      {"precision", percent(cm.tp, cm.tp + cm.fp)},
      {"recall", percent(cm.tp, cm.tp + cm.fn)},
      {"tp", static_cast<double>(cm.tp)},
      {"fp", static_cast<double>(cm.fp)},
      {"fn", static_cast<double>(cm.fn)},
      {"tn", static_cast<double>(cm.tn)},
  };
}

std::map<std::string, double> self_correction_metrics(const SelfCorrectionCounts& c) {
  const std::size_t initially_correct = c.correct_to_correct + c.correct_to_incorrect;
  const std::size_t initially_wrong = c.incorrect_to_correct + c.incorrect_to_incorrect;
  const double acc1 = percent(initially_correct, c.total);
  const double acc2 = percent(c.correct_to_correct + c.incorrect_to_correct, c.total);
  return {
      {"initial_accuracy", acc1},
      {"final_accuracy", acc2},
      {"c2i_rate", percent(c.correct_to_incorrect, initially_correct)},
      {"i2c_rate", percent(c.incorrect_to_correct, initially_wrong)},
      {"overall_correction_rate", acc2 - acc1},
      {"total", static_cast<double>(c.total)},
  };
}

EvalReport eval_pass1(Backend& backend, const std::vector<Question>& questions, const EvalOptions& options) {
  std::vector<json> items(questions.size());
  parallel_for(questions.size(), options.concurrency_cap, [&](std::size_t i) {
    const auto& q = questions[i];
    auto params = seeded(options.greedy, 1, solve_seed(options.run_seed, q.id));
    auto c = safe_sample(backend, {render_question_prompt(q), params, q.id, AgentRole::prover, Turn::initial}).front();
    auto ex = c.text ? extract_final_answer(*c.text) : std::nullopt;
    items[i] = {{"question_id", q.id},
                {"completion", c.text ? json(*c.text) : json(nullptr)},
                {"extracted", ex ? json(ex->raw) : json(nullptr)},
                {"correct", score_pass1(text_of(c), q.truth)},
                {"failed", !c.ok()}};
  });
  EvalReport report;
  report.task = "pass1";
  std::size_t correct = 0, failed = 0;
  for (const auto& it : items) {
    correct += it["correct"].get<bool>();
    failed += it["failed"].get<bool>();
  }
  report.metrics = {{"accuracy", percent(correct, items.size())},
                    {"n", static_cast<double>(items.size())},
                    {"transport_failures", static_cast<double>(failed)}};
  report.per_item = std::move(items);
  report.config_digest = digest_of(options_json(options));
  return report;
}

EvalReport eval_majority(Backend& backend, const std::vector<Question>& questions, int k, const EvalOptions& options) {
  if (k < 1) throw ConfigError("majority voting needs k >= 1");
  std::vector<json> items(questions.size());
  parallel_for(questions.size(), options.concurrency_cap, [&](std::size_t i) {
    const auto& q = questions[i];
    auto params = seeded(k == 1 ? options.greedy : options.vote_sampling, k, solve_seed(options.run_seed, q.id));
    auto completions = safe_sample(backend, {render_question_prompt(q), params, q.id, AgentRole::prover, Turn::initial});
    std::vector<std::optional<std::string>> texts;
    json answers = json::array();
    std::size_t failed = 0;
    for (const auto& c : completions) {
      texts.push_back(c.text);
      failed += !c.ok();
      auto ex = c.text ? extract_final_answer(*c.text) : std::nullopt;
      answers.push_back(ex && ex->kind != AnswerKind::unparsed ? json(ex->raw) : json(nullptr));
    }
    auto vote = majority_vote(texts, q.truth);
    items[i] = {{"question_id", q.id},
                {"answers", std::move(answers)},
                {"winner", vote.winner ? json(*vote.winner) : json(nullptr)},
                {"class_size", vote.class_size},
                {"classes", vote.classes},
                {"correct", vote.correct},
                {"failed_samples", failed}};
  });
  EvalReport report;
  report.task = fmt::format("maj@{}", k);
  std::size_t correct = 0;
  for (const auto& it : items) correct += it["correct"].get<bool>();
  report.metrics = {{"accuracy", percent(correct, items.size())},
                    {"n", static_cast<double>(items.size())},
                    {"k", static_cast<double>(k)}};
  report.per_item = std::move(items);
  json cfg = options_json(options);
  cfg["k"] = k;
  report.config_digest = digest_of(cfg);
  return report;
}

std::string_view to_string(StepLabel label) {
  return label == StepLabel::correct_step ? "correct_step" : "erroneous_step";
}

ErrorDetectionBuild build_error_detection_set(Backend& model, Backend& annotator, const std::vector<Question>& questions,
                                              const ErrorDetectionBuildOptions& options) {
  if (options.n_samples < 1) throw ConfigError("n_samples must be >= 1");
  ErrorDetectionBuild build;
  std::vector<ErrorDetectionItem> positives, negatives;

  for (const auto& q : questions) {
    auto params = seeded(options.sampling, options.n_samples, derive_seed(options.run_seed, q.id, "errdet-sample"));
    auto samples = safe_sample(model, {render_question_prompt(q), params, q.id, AgentRole::prover, Turn::initial});
    std::vector<Attempt> graded;
    int n_correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!samples[i].ok()) continue;
      graded.push_back(grade_attempt(*samples[i].text, q.truth, static_cast<int>(i)));
      n_correct += graded.back().is_correct;
    }
    if (2 * n_correct <= options.n_samples) continue;
    ++build.questions_retained;

    for (const auto& a : graded) {
      const auto steps = split_steps(a.text).steps;
      if (steps.empty()) continue;
      if (a.is_correct) {
        double u = unit_uniform(derive_seed(options.run_seed, q.id, "errdet-step"), static_cast<std::uint64_t>(a.sample_index));
        int step = 1 + std::min(static_cast<int>(u * static_cast<double>(steps.size())), static_cast<int>(steps.size()) - 1);
        positives.push_back({q.id, a.text, step, StepLabel::correct_step, std::nullopt});
        continue;
      }
      auto ann_params = seeded(SamplingParams::greedy(), 1,
                               derive_seed(options.run_seed, q.id, "errdet-annotate", a.sample_index));
      auto reply = safe_sample(annotator, {error_annotation_prompt(q, a), ann_params, q.id, AgentRole::annotator,
                                           Turn::annotate})
                       .front();
      try {
        if (!reply.ok()) throw AnnotationParseError("annotator request failed");
        int step = parse_annotation_reply(*reply.text);
        if (step < 1 || step > static_cast<int>(steps.size())) {
          throw AnnotationParseError(fmt::format("step {} outside 1..{}", step, steps.size()));
        }
        negatives.push_back({q.id, a.text, step, StepLabel::erroneous_step, std::nullopt});
      } catch (const AnnotationParseError& e) {
        ++build.annotation_failures;
        spdlog::debug("question {}: dropping annotation: {}", q.id, e.what());
      }
    }
  }

  std::size_t per_label = std::min(positives.size(), negatives.size());
  if (options.per_label > 0) per_label = std::min(per_label, options.per_label);
  auto subsample = [&](std::vector<ErrorDetectionItem>& v, std::string_view tag) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keys;
    for (std::size_t i = 0; i < v.size(); ++i) keys.emplace_back(derive_seed(options.run_seed, v[i].question_id, tag, i), i);
    std::sort(keys.begin(), keys.end());
    keys.resize(per_label);
    std::vector<std::size_t> idx;
    for (auto& [key, i] : keys) idx.push_back(i);
    std::sort(idx.begin(), idx.end());
    std::vector<ErrorDetectionItem> out;
    for (auto i : idx) out.push_back(v[i]);
    return out;
  };
  auto pos = subsample(positives, "errdet-balance-pos");
  auto neg = subsample(negatives, "errdet-balance-neg");
  build.items = std::move(neg);
  build.items.insert(build.items.end(), pos.begin(), pos.end());
  return build;
}

EvalReport eval_error_detection(Backend& backend, const std::vector<Question>& questions,
                                std::vector<ErrorDetectionItem> items, const EvalOptions& options) {
  const auto by_id = index_questions(questions);
  std::vector<std::optional<std::string>> replies(items.size());
  parallel_for(items.size(), options.concurrency_cap, [&](std::size_t i) {
    const auto& item = items[i];
    auto it = by_id.find(item.question_id);
    if (it == by_id.end()) throw ContractError("error-detection item refers to unknown question " + item.question_id);
    int n_steps = static_cast<int>(split_steps(item.solution_text).steps.size());
    if (item.step_index < 1 || item.step_index > n_steps) {
      throw ContractError(fmt::format("item {} step {} outside 1..{}", i, item.step_index, n_steps));
    }
    auto params = seeded(options.greedy, 1, derive_seed(options.run_seed, item.question_id, "judge", i));
    auto c = safe_sample(backend, {step_judgment_prompt(*it->second, item.solution_text, item.step_index), params,
                                   item.question_id, AgentRole::prover, Turn::judge})
                 .front();
    replies[i] = c.text;
  });

  ConfusionMatrix cm;
  std::size_t predicted_erroneous = 0, predicted_correct = 0, unparseable = 0;
  EvalReport report;
  report.task = "errdet";
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& item = items[i];
    std::optional<StepVerdict> verdict = replies[i] ? parse_step_verdict(*replies[i]) : std::nullopt;
    bool flagged = !verdict;
    if (verdict) {
      item.prediction = *verdict == StepVerdict::erroneous ? StepLabel::erroneous_step : StepLabel::correct_step;
    } else {
      ++unparseable;
      item.prediction =
          predicted_erroneous > predicted_correct ? StepLabel::erroneous_step : StepLabel::correct_step;
    }
    const bool pred_pos = *item.prediction == StepLabel::erroneous_step;
    const bool true_pos = item.label == StepLabel::erroneous_step;
    (pred_pos ? predicted_erroneous : predicted_correct)++;
    if (pred_pos && true_pos) ++cm.tp;
    if (pred_pos && !true_pos) ++cm.fp;
    if (!pred_pos && true_pos) ++cm.fn;
    if (!pred_pos && !true_pos) ++cm.tn;
    json rec = item;
    rec["reply"] = replies[i] ? json(*replies[i]) : json(nullptr);
    rec["unparseable"] = flagged;
    report.per_item.push_back(std::move(rec));
  }
  report.metrics = detection_metrics(cm);
  report.metrics["unparseable"] = static_cast<double>(unparseable);
  report.metrics["n"] = static_cast<double>(items.size());
  report.config_digest = digest_of({{"options", options_json(options)},
                                    {"judge_template", sha256_hex(template_text("judge_step"))}});
  return report;
}

EvalReport eval_self_correction(Backend& backend, const std::vector<Question>& questions, const EvalOptions& options) {
  std::vector<json> items(questions.size());
  parallel_for(questions.size(), options.concurrency_cap, [&](std::size_t i) {
    const auto& q = questions[i];
    SamplingParams first;  // temperature 0.95
    first.max_tokens = options.vote_sampling.max_tokens;
    first = seeded(first, 1, derive_seed(options.run_seed, q.id, "sc-round1"));
    auto c1 = safe_sample(backend, {render_question_prompt(q), first, q.id, AgentRole::prover, Turn::initial}).front();
    json rec = {{"question_id", q.id}, {"initial", c1.text ? json(*c1.text) : json(nullptr)}};
    bool failed = !c1.ok() || c1.text->empty();
    bool initial_correct = score_pass1(c1.text, q.truth);
    bool final_correct = false;
    if (!failed) {
      Attempt initial = grade_attempt(*c1.text, q.truth);
      auto second = seeded(options.greedy, 1, derive_seed(options.run_seed, q.id, "sc-round2"));
      auto c2 = safe_sample(backend, {self_correct_prompt(q, initial), second, q.id, AgentRole::prover,
                                      Turn::self_correct})
                    .front();
      rec["revised"] = c2.text ? json(*c2.text) : json(nullptr);
      failed = !c2.ok();
      final_correct = score_pass1(c2.text, q.truth);
    } else {
      rec["revised"] = nullptr;
    }
    rec["initial_correct"] = initial_correct;
    rec["final_correct"] = final_correct;
    rec["failed"] = failed;
    items[i] = std::move(rec);
  });

  SelfCorrectionCounts counts;
  for (const auto& it : items) {
    bool a = it["initial_correct"].get<bool>();
    bool b = it["final_correct"].get<bool>();
    ++counts.total;
    if (a && b) ++counts.correct_to_correct;
    if (a && !b) ++counts.correct_to_incorrect;
    if (!a && b) ++counts.incorrect_to_correct;
    if (!a && !b) ++counts.incorrect_to_incorrect;
  }
  EvalReport report;
  report.task = "selfcorrect";
  report.metrics = self_correction_metrics(counts);
  report.per_item = std::move(items);
  report.config_digest = digest_of(options_json(options));
  return report;
}

EvalReport eval_winrate_matrix(const std::vector<NamedBackend>& provers,
                               const std::vector<NamedBackend>& helpful_critics,
                               const std::vector<NamedBackend>& misleading_critics,
                               const std::vector<Question>& questions, const WinRateOptions& options) {
  if (questions.empty()) throw ConfigError("win-rate evaluation needs at least one question");
  if (provers.empty() || helpful_critics.empty() || misleading_critics.empty()) {
    throw ConfigError("win-rate evaluation needs at least one prover, helpful critic and misleading critic");
  }
  if (options.n_revisions < 1) throw ConfigError("n_revisions must be >= 1");

  EvalReport report;
  report.task = "winrate";
  json cooperative = json::object(), adversarial = json::object(), support = json::object();

  for (std::size_t i = 0; i < provers.size(); ++i) {
    const auto& prover = provers[i];
    std::vector<Attempt> initials;
    for (const auto& q : questions) {
      auto params = seeded(options.initial, 1, derive_seed(options.run_seed, q.id, "wr-initial", i));
      auto c = safe_sample(*prover.backend, {render_question_prompt(q), params, q.id, AgentRole::prover, Turn::initial})
                   .front();
      Attempt a = c.ok() ? grade_attempt(*c.text, q.truth) : Attempt{};
      a.failed = !c.ok() || c.text->empty();
      initials.push_back(std::move(a));
    }

    auto play = [&](const std::vector<NamedBackend>& critics, Intent intent, std::size_t critic_offset, json& matrix) {
      for (std::size_t j = 0; j < critics.size(); ++j) {
        const auto& critic = critics[j];
        std::vector<std::pair<std::string, double>> rates;
        for (std::size_t qi = 0; qi < questions.size(); ++qi) {
          const auto& q = questions[qi];
          const Attempt& initial = initials[qi];
          if (initial.failed || assign_critic_intent(initial.is_correct) != intent) continue;
          auto cp = seeded(options.sampling, 1, derive_seed(options.run_seed, q.id, "wr-critique", i, critic_offset + j));
          auto crit = safe_sample(*critic.backend,
                                  {render_critic_prompt(q, initial), cp, q.id,
                                   intent == Intent::helpful ? AgentRole::helpful : AgentRole::misleading,
                                   Turn::critique})
                          .front();
          if (!crit.ok()) continue;
          Critique critique;
          critique.text = *crit.text;
          critique.intent = intent;
          auto rp = seeded(options.sampling, options.n_revisions,
                           derive_seed(options.run_seed, q.id, "wr-revise", i, critic_offset + j));
          auto revs = safe_sample(*prover.backend, {render_revise_prompt(q, initial, critique), rp, q.id,
                                                    AgentRole::prover, Turn::revise});
          int graded = 0, wins = 0;
          for (const auto& r : revs) {
            if (!r.ok()) continue;
            ++graded;
            wins += grade_revision(*r.text, initial, q.truth).is_correct;
          }
          if (graded == 0) continue;
          rates.emplace_back(q.id, static_cast<double>(wins) / graded);
          report.per_item.push_back({{"prover", prover.name},
                                     {"critic", critic.name},
                                     {"branch", intent == Intent::helpful ? "cooperative" : "adversarial"},
                                     {"question_id", q.id},
                                     {"wins", wins},
                                     {"graded", graded}});
        }
        // Summed in id order so the cell does not depend on corpus order.
        std::sort(rates.begin(), rates.end());
        double sum = 0.0;
        for (const auto& [id, rate] : rates) sum += rate;
        const std::size_t counted = rates.size();
        double cell = counted ? 100.0 * sum / static_cast<double>(counted) : 0.0;
        matrix[prover.name][critic.name] = cell;
        support[intent == Intent::helpful ? "cooperative" : "adversarial"][prover.name][critic.name] = counted;
        report.metrics[fmt::format("{}/{}/{}", intent == Intent::helpful ? "cooperative" : "adversarial", prover.name,
                                   critic.name)] = cell;
      }
    };
    play(helpful_critics, Intent::helpful, 0, cooperative);
    play(misleading_critics, Intent::misleading, helpful_critics.size(), adversarial);
  }

  report.extra = {{"cooperative", cooperative}, {"adversarial", adversarial}, {"questions_per_cell", support}};
  json names = {{"provers", json::array()}, {"helpful", json::array()}, {"misleading", json::array()}};
  for (const auto& p : provers) names["provers"].push_back(p.name);
  for (const auto& c : helpful_critics) names["helpful"].push_back(c.name);
  for (const auto& c : misleading_critics) names["misleading"].push_back(c.name);
  report.config_digest = digest_of({{"run_seed", options.run_seed},
                                    {"n_revisions", options.n_revisions},
                                    {"sampling", options.sampling},
                                    {"initial", options.initial},
                                    {"backends", names}});
  return report;
}

}  // namespace cdg
