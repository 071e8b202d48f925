#include "cdg/game.hpp"

#include <fmt/format.h>

#include "cdg/errors.hpp"

namespace cdg {

Question make_question(std::string id, std::string text, std::string ground_truth, Split split,
                       std::string source) {
  Question q;
  q.id = std::move(id);
  q.text = std::move(text);
  q.ground_truth = std::move(ground_truth);
  q.split = split;
  q.source = std::move(source);
  q.truth = canonicalize(q.ground_truth);
  return q;
}

void GameConfig::validate() const {
  auto check_tau = [](double tau, const char* name) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError(fmt::format("{} must lie in [0,1], got {}", name, tau));
  };
  check_tau(tau_prover, "tau_prover");
  check_tau(tau_helpful, "tau_helpful");
  check_tau(tau_misleading, "tau_misleading");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (fanout.n_initial < 1 || fanout.n_helpful_critiques < 1 || fanout.n_misleading_critiques < 1 ||
      fanout.n_revisions < 1) {
    throw ConfigError("fan-out counts must be >= 1");
  }
  if (balance_cap < 0) throw ConfigError("balance_cap must be >= 0");
}

Intent assign_critic_intent(bool attempt_correct) {
  return attempt_correct ? Intent::misleading : Intent::helpful;
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::first_try_win: return "FIRST_TRY_WIN";
    case Outcome::resisted: return "RESISTED";
    case Outcome::misled: return "MISLED";
    case Outcome::corrected: return "CORRECTED";
    case Outcome::uncorrected: return "UNCORRECTED";
    case Outcome::resist_but_wrong_path: return "RESIST_BUT_WRONG_PATH";
  }
  return "UNCORRECTED";
}

std::string_view to_string(Intent intent) {
  return intent == Intent::helpful ? "helpful" : "misleading";
}

std::optional<Outcome> classify_initial(const Attempt& initial) {
  if (initial.is_correct) return Outcome::first_try_win;
  return std::nullopt;
}

Outcome classify_outcome(const Attempt& initial, const Attempt& revision) {
  if (initial.is_correct) {
    if (revision.is_correct) return Outcome::resisted;
    return revision.resisted ? Outcome::resist_but_wrong_path : Outcome::misled;
  }
  return revision.is_correct ? Outcome::corrected : Outcome::uncorrected;
}

Attempt grade_attempt(std::string text, const CanonicalAnswer& truth, int sample_index) {
  Attempt a;
  a.sample_index = sample_index;
  a.resisted = detect_resist_marker(text);
  if (auto ex = extract_final_answer(text)) {
    if (ex->kind != AnswerKind::unparsed) a.extracted_answer = ex->raw;
    if (ex->kind != AnswerKind::unparsed && ex->kind != AnswerKind::marker) {
      a.is_correct = answers_equivalent(canonicalize(ex->raw), truth);
    }
  }
  a.text = std::move(text);
  return a;
}

Attempt grade_revision(std::string text, const Attempt& initial, const CanonicalAnswer& truth,
                       int sample_index) {
  Attempt a = grade_attempt(std::move(text), truth, sample_index);
  if (a.extracted_answer && canonicalize(*a.extracted_answer).kind == AnswerKind::marker) {
    a.is_correct = initial.is_correct;
  }
  return a;
}

RevisionStats tally_revisions(const std::vector<Attempt>& revisions) {
  RevisionStats s;
  for (const auto& r : revisions) {
    if (r.failed) {
      ++s.n_failed;
      continue;
    }
    ++s.n_revisions;
    if (r.is_correct) ++s.n_correct;
    if (r.resisted) ++s.n_resisted;
    if (!r.resisted && !r.is_correct) ++s.n_misled;
  }
  return s;
}

namespace {

// Mean over critiques of the per-critique mean of `indicator` over graded
// revisions, kept exact. Critiques without graded revisions are skipped; an
// attempt with none left is undefined.
template <typename Indicator>
Rational critique_mean(const AttemptRecord& record, Indicator indicator) {
  Rational total = 0;
  int counted = 0;
  for (const auto& critique : record.critiques) {
    int graded = 0;
    int hits = 0;
    for (const auto& rev : critique.revisions) {
      if (rev.failed) continue;
      ++graded;
      if (indicator(rev)) ++hits;
    }
    if (graded == 0) continue;
    total += Rational(hits, graded);
    ++counted;
  }
  if (counted == 0) {
    throw UndefinedRewardError(fmt::format("attempt {} has no graded revisions", record.initial.sample_index));
  }
  return total / counted;
}

template <typename PerAttempt>
double attempt_mean(const Episode& episode, PerAttempt per_attempt) {
  Rational total = 0;
  int counted = 0;
  for (const auto& record : episode.attempts) {
    if (record.initial.failed) continue;
    total += per_attempt(record);
    ++counted;
  }
  if (counted == 0) throw UndefinedRewardError("episode " + episode.id + " has no graded attempts");
  return static_cast<double>(total / counted);
}

bool correct(const Attempt& a) { return a.is_correct; }
bool incorrect(const Attempt& a) { return !a.is_correct; }

}  // namespace

double compute_prover_reward(const Episode& episode, double eta) {
  const Rational bonus(eta);
  return attempt_mean(episode, [&bonus](const AttemptRecord& r) {
    Rational revised = critique_mean(r, correct);
    return r.initial.is_correct ? revised + bonus : revised;
  });
}

double compute_helpful_reward(const Episode& episode) {
  return attempt_mean(episode, [](const AttemptRecord& r) {
    Rational revised = critique_mean(r, correct);
    return r.initial.is_correct ? Rational(0) : revised;
  });
}

double compute_misleading_reward(const Episode& episode) {
  return attempt_mean(episode, [](const AttemptRecord& r) {
    Rational revised = critique_mean(r, incorrect);
    return r.initial.is_correct ? revised : Rational(0);
  });
}

RoleRewards compute_rewards(const Episode& episode, double eta) {
  return RoleRewards{compute_prover_reward(episode, eta), compute_helpful_reward(episode),
                     compute_misleading_reward(episode), eta};
}

double helpful_critique_reward(const Critique& critique) {
  if (critique.intent != Intent::helpful) throw RoleMismatchError("helpful reward requested for a misleading critique");
  auto s = tally_revisions(critique.revisions);
  if (s.n_revisions == 0) throw UndefinedRewardError("critique has no graded revisions");
  return static_cast<double>(s.n_correct) / s.n_revisions;
}

double misleading_critique_reward(const Critique& critique) {
  if (critique.intent != Intent::misleading) throw RoleMismatchError("misleading reward requested for a helpful critique");
  auto s = tally_revisions(critique.revisions);
  if (s.n_revisions == 0) throw UndefinedRewardError("critique has no graded revisions");
  return static_cast<double>(s.n_revisions - s.n_correct) / s.n_revisions;
}

}  // namespace cdg
