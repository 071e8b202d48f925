#include "cdg/collector.hpp"

#include <mutex>
#include <optional>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cdg/digest.hpp"
#include "cdg/errors.hpp"
#include "cdg/parallel.hpp"
#include "cdg/serialization.hpp"
#include "cdg/store.hpp"

namespace cdg {

namespace fs = std::filesystem;

void CollectionPlan::validate() const {
  if (round < 1) throw ConfigError("round must be >= 1");
  if (concurrency_cap < 1) throw ConfigError("concurrency_cap must be >= 1");
  if (!agents.prover || !agents.helpful || !agents.misleading) {
    throw ConfigError(fmt::format("round {} needs prover, helpful and misleading backends", round));
  }
  if (fanout.n_initial < 1 || fanout.n_helpful_critiques < 1 || fanout.n_misleading_critiques < 1 ||
      fanout.n_revisions < 1) {
    throw ConfigError("fan-out counts must be >= 1");
  }
}

namespace {

std::vector<Completion> request(Backend& backend, SampleRequest req) {
  try {
    return sample_completions(backend, req);
  } catch (const TransportError& e) {
    spdlog::warn("question {} {}: {}", req.question_id, to_string(req.turn), e.what());
    return std::vector<Completion>(static_cast<std::size_t>(req.params.n), Completion::failed(e.what()));
  }
}

SamplingParams with(SamplingParams p, int n, std::uint64_t seed) {
  p.n = n;
  p.seed = seed;
  return p;
}

Attempt failed_attempt(std::string why, int index, const SamplingParams& params) {
  Attempt a;
  a.failed = true;
  a.failure = std::move(why);
  a.sample_index = index;
  a.gen_params = params;
  return a;
}

}  // namespace

Episode collect_episode(const Question& question, const CollectionPlan& plan) {
  plan.validate();
  const auto& qid = question.id;
  const auto& fan = plan.fanout;

  Episode episode;
  episode.id = fmt::format("r{}-{}", plan.round, qid);
  episode.question_id = qid;
  episode.round = plan.round;

  auto initial_params = with(plan.sampling, fan.n_initial, derive_seed(plan.run_seed, qid, "initial", plan.round));
  auto initials = request(*plan.agents.prover,
                          {render_question_prompt(question), initial_params, qid, AgentRole::prover, Turn::initial});

  for (int i = 0; i < fan.n_initial; ++i) {
    AttemptRecord record;
    const auto& c = initials[static_cast<std::size_t>(i)];
    if (!c.ok()) {
      record.initial = failed_attempt(c.failure, i, initial_params);
      episode.attempts.push_back(std::move(record));
      continue;
    }
    record.initial = grade_attempt(*c.text, question.truth, i);
    record.initial.gen_params = initial_params;
    record.assigned_intent = assign_critic_intent(record.initial.is_correct);

    const bool helpful = record.assigned_intent == Intent::helpful;
    Backend& critic = helpful ? *plan.agents.helpful : *plan.agents.misleading;
    const int n_critiques = helpful ? fan.n_helpful_critiques : fan.n_misleading_critiques;
    auto critic_params = with(plan.sampling, n_critiques, derive_seed(plan.run_seed, qid, "critique", plan.round, i));
    auto critiques = request(critic, {render_critic_prompt(question, record.initial), critic_params, qid,
                                      helpful ? AgentRole::helpful : AgentRole::misleading, Turn::critique});
    record.critiques_requested = n_critiques;

    std::unordered_set<std::string> seen;
    for (int k = 0; k < n_critiques; ++k) {
      const auto& cc = critiques[static_cast<std::size_t>(k)];
      if (!cc.ok()) {
        ++record.critique_failures;
        continue;
      }
      if (plan.dedup_critiques && !seen.insert(*cc.text).second) {
        ++record.critique_duplicates;
        continue;
      }
      Critique critique;
      critique.text = *cc.text;
      critique.intent = record.assigned_intent;
      critique.target_solution_index = i;
      critique.sample_index = k;

      auto revise_params =
          with(plan.sampling, fan.n_revisions, derive_seed(plan.run_seed, qid, "revise", plan.round, i, k));
      auto revisions = request(*plan.agents.prover, {render_revise_prompt(question, record.initial, critique),
                                                     revise_params, qid, AgentRole::prover, Turn::revise});
      for (int r = 0; r < fan.n_revisions; ++r) {
        const auto& rc = revisions[static_cast<std::size_t>(r)];
        Attempt rev = rc.ok() ? grade_revision(*rc.text, record.initial, question.truth, r)
                              : failed_attempt(rc.failure, r, revise_params);
        rev.gen_params = revise_params;
        critique.revisions.push_back(std::move(rev));
      }
      critique.revision_stats = tally_revisions(critique.revisions);
      record.critiques.push_back(std::move(critique));
    }

    bool any_graded = false;
    for (const auto& cr : record.critiques) any_graded = any_graded || cr.revision_stats.n_revisions > 0;
    if (!any_graded) {
      record.initial.failed = true;
      record.initial.failure = "no graded revisions";
    }
    episode.attempts.push_back(std::move(record));
  }

  bool any_attempt = false;
  for (const auto& a : episode.attempts) any_attempt = any_attempt || !a.initial.failed;
  if (!any_attempt) {
    episode.failed = true;
    episode.rewards.eta = plan.eta;
    return episode;
  }
  episode.rewards = compute_rewards(episode, plan.eta);
  return episode;
}

RoundResult collect_round(const CollectionPlan& plan, const std::vector<Question>& questions,
                          const fs::path& episodes_path) {
  plan.validate();
  RoundResult result;

  std::map<std::string, Episode> existing;
  if (fs::exists(episodes_path)) {
    JsonlReadStats stats;
    auto stored = read_jsonl<Episode>(episodes_path, &stats);
    if (stats.truncated_tail) write_jsonl(episodes_path, stored);
    for (auto& e : stored) {
      auto qid = e.question_id;
      existing.emplace(std::move(qid), std::move(e));
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (!existing.count(questions[i].id)) pending.push_back(i);
  }
  result.resumed = questions.size() - pending.size();
  if (result.resumed) spdlog::info("round {}: resuming, {} episodes already stored", plan.round, result.resumed);

  std::vector<std::optional<Episode>> slots(pending.size());
  std::vector<bool> done(pending.size(), false);
  std::size_t next_to_write = 0;
  std::mutex writer_mutex;
  JsonlAppender writer(episodes_path);

  parallel_for(pending.size(), plan.concurrency_cap, [&](std::size_t k) {
    Episode e = collect_episode(questions[pending[k]], plan);
    std::lock_guard lock(writer_mutex);
    slots[k] = std::move(e);
    done[k] = true;
    while (next_to_write < pending.size() && done[next_to_write]) {
      const auto& ep = *slots[next_to_write];
      if (!ep.failed) writer.append(nlohmann::json(ep));
      ++next_to_write;
    }
  });

  std::map<std::string, std::size_t> fresh;
  for (std::size_t k = 0; k < pending.size(); ++k) fresh[questions[pending[k]].id] = k;
  for (const auto& q : questions) {
    if (auto it = existing.find(q.id); it != existing.end()) {
      result.episodes.push_back(it->second);
      continue;
    }
    auto& ep = *slots[fresh.at(q.id)];
    if (ep.failed) {
      result.failed_ids.push_back(q.id);
      continue;
    }
    result.episodes.push_back(std::move(ep));
  }
  if (!result.failed_ids.empty()) {
    spdlog::warn("round {}: {} episodes failed and were not stored", plan.round, result.failed_ids.size());
  }
  return result;
}

std::vector<TrainingSample> generate_imitation_dataset(std::shared_ptr<Backend> teacher, const CollectionPlan& plan,
                                                       const std::vector<Question>& questions,
                                                       std::size_t target_size) {
  std::vector<TrainingSample> out;
  if (target_size == 0 || questions.empty()) return out;
  CollectionPlan p = plan;
  p.agents = {teacher, teacher, teacher};
  p.validate();

  auto emit = [&](Messages messages, const std::string& target, SampleRole role, const Episode& e) {
    if (out.size() < target_size) {
      out.push_back({std::move(messages), target, role, Category::imitation, plan.round, e.id});
    }
  };

  for (std::uint64_t pass = 0; out.size() < target_size; ++pass) {
    const std::size_t before = out.size();
    p.run_seed = derive_seed(plan.run_seed, "imitation", "pass", pass);
    for (const auto& q : questions) {
      if (out.size() >= target_size) break;
      Episode e = collect_episode(q, p);
      e.id = fmt::format("imitation-{}-{}", pass, q.id);
      for (const auto& rec : e.attempts) {
        if (rec.initial.text.empty()) continue;
        emit(render_question_prompt(q), rec.initial.text, SampleRole::prover, e);
        for (const auto& c : rec.critiques) {
          emit(render_critic_prompt(q, rec.initial), c.text,
               c.intent == Intent::helpful ? SampleRole::helpful : SampleRole::misleading, e);
          for (const auto& r : c.revisions) {
            if (!r.failed) emit(render_revise_prompt(q, rec.initial, c), r.text, SampleRole::prover, e);
          }
        }
      }
    }
    if (out.size() == before) {
      spdlog::warn("imitation teacher produced no samples; stopping at {} of {}", out.size(), target_size);
      break;
    }
  }
  return out;
}

bool has_repetition_loop(std::string_view text, const LoopFilter& filter) {
  const std::size_t n = text.size();
  const std::size_t reps = std::max<std::size_t>(filter.min_repeats, 2);
  const std::size_t min_p = std::max<std::size_t>(filter.min_period, 1);
  // r back-to-back copies of a period-p block == a run of p*(r-1) positions
  // where text[j] == text[j+p].
  for (std::size_t p = min_p; p * reps <= n; ++p) {
    const std::size_t need = p * (reps - 1);
    std::size_t run = 0;
    for (std::size_t j = 0; j + p < n; ++j) {
      run = text[j] == text[j + p] ? run + 1 : 0;
      if (run >= need) return true;
    }
  }
  return false;
}

std::vector<TrainingSample> rejection_sample_dataset(Backend& generator, const std::vector<Question>& questions,
                                                     const DistillOptions& options) {
  std::vector<std::vector<TrainingSample>> per_question(questions.size());
  parallel_for(questions.size(), options.concurrency_cap, [&](std::size_t i) {
    const auto& q = questions[i];
    auto params = with(options.sampling, options.n_per_question, derive_seed(options.run_seed, q.id, "distill"));
    auto prompt = render_question_prompt(q);
    for (const auto& c : request(generator, {prompt, params, q.id, AgentRole::prover, Turn::initial})) {
      if (!c.ok() || !is_correct(*c.text, q.truth) || has_repetition_loop(*c.text, options.loop_filter)) continue;
      per_question[i].push_back({prompt, *c.text, SampleRole::prover, Category::distillation, 1, "distill-" + q.id});
    }
  });
  std::vector<TrainingSample> out;
  for (auto& v : per_question) std::move(v.begin(), v.end(), std::back_inserter(out));
  return out;
}

std::vector<TrainingSample> build_self_correction_dataset(Backend& model, const std::vector<Question>& questions,
                                                          const SelfCorrectionDataOptions& options) {
  std::vector<TrainingSample> out;
  for (const auto& q : questions) {
    auto params = with(options.sampling, options.n_per_question, derive_seed(options.run_seed, q.id, "sc-initial"));
    auto initials = request(model, {render_question_prompt(q), params, q.id, AgentRole::prover, Turn::initial});
    for (std::size_t i = 0; i < initials.size(); ++i) {
      if (!initials[i].ok() || initials[i].text->empty()) continue;
      Attempt initial = grade_attempt(*initials[i].text, q.truth, static_cast<int>(i));
      auto greedy = with(SamplingParams::greedy(options.sampling.max_tokens), 1,
                         derive_seed(options.run_seed, q.id, "sc-check", i));
      auto prompt = self_correct_prompt(q, initial);
      auto checks = request(model, {prompt, greedy, q.id, AgentRole::prover, Turn::self_correct});
      const auto& check = checks.front();
      if (!check.ok() || !is_correct(*check.text, q.truth) || has_repetition_loop(*check.text, options.loop_filter)) {
        continue;
      }
      out.push_back({prompt, *check.text, SampleRole::prover,
                     initial.is_correct ? Category::self_correct_kept : Category::self_correct_fixed, 1,
                     "selfcorrect-" + q.id});
    }
  }
  return cap_categories(out, {Category::self_correct_kept, Category::self_correct_fixed}, options.cap_per_type,
                        options.run_seed);
}

}  // namespace cdg
