#include "cdg/selector.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "json.hpp"

#include "cdg/digest.hpp"
#include "cdg/errors.hpp"
#include "cdg/serialization.hpp"

namespace cdg {

namespace {

// Guards ceil/floor against tau * n landing a hair off an integer.
constexpr double kThresholdEps = 1e-9;

const Question& question_for(const QuestionIndex& questions, const Episode& e) {
  auto it = questions.find(e.question_id);
  if (it == questions.end()) {
    throw ContractError(fmt::format("episode {} refers to unknown question '{}'", e.id, e.question_id));
  }
  return it->second;
}

bool passes(double tau, int hits, int graded, ThresholdMode mode) {
  return graded > 0 && hits >= required_successes(tau, graded, mode);
}

bool helpful_selected(const Critique& c, const SelectionConfig& cfg) {
  auto s = tally_revisions(c.revisions);
  return c.intent == Intent::helpful && passes(cfg.tau_helpful, s.n_correct, s.n_revisions, cfg.mode);
}

bool misleading_selected(const Critique& c, const SelectionConfig& cfg) {
  auto s = tally_revisions(c.revisions);
  return c.intent == Intent::misleading && passes(cfg.tau_misleading, s.n_misled, s.n_revisions, cfg.mode);
}

// A prover sample carries a binary reward, so tau_prover only ever matters at 1.0.
bool prover_passes(const SelectionConfig& cfg) { return passes(cfg.tau_prover, 1, 1, cfg.mode); }

bool is_resist(bool initial_correct, const Critique& c, const Attempt& r) {
  return initial_correct && c.intent == Intent::misleading && !r.failed && r.resisted;
}

bool is_corrected(bool initial_correct, const Critique& c, const Attempt& r) {
  return !initial_correct && c.intent == Intent::helpful && !r.failed && r.is_correct;
}

bool is_first_try(const AttemptRecord& rec) { return !rec.initial.failed && rec.initial.is_correct; }

std::string sample_key(const TrainingSample& s) {
  return nlohmann::json{{"m", s.messages}, {"t", s.target}}.dump();
}

}  // namespace

std::map<std::string, std::size_t> DatasetBundle::category_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto* set : {&d_prover, &d_helpful, &d_misleading}) {
    for (const auto& s : *set) {
      ++out[fmt::format("{}/{}", to_string(s.role), to_string(s.category))];
    }
  }
  return out;
}

int required_successes(double tau, int graded, ThresholdMode mode) {
  const double x = tau * graded;
  if (mode == ThresholdMode::at_least) return static_cast<int>(std::ceil(x - kThresholdEps));
  return static_cast<int>(std::floor(x + kThresholdEps)) + 1;
}

std::vector<TrainingSample> select_prover_samples(const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                                  const SelectionConfig& config) {
  std::vector<TrainingSample> out;
  if (!prover_passes(config)) return out;
  for (const auto& e : episodes) {
    if (e.failed) continue;
    const auto& q = question_for(questions, e);
    for (const auto& rec : e.attempts) {
      if (is_first_try(rec)) {
        out.push_back({render_question_prompt(q), rec.initial.text, SampleRole::prover, Category::first_try, e.round,
                       e.id});
      }
      if (rec.initial.failed) continue;
      for (const auto& c : rec.critiques) {
        for (const auto& r : c.revisions) {
          if (is_resist(rec.initial.is_correct, c, r)) {
            out.push_back({render_revise_prompt(q, rec.initial, c), r.text, SampleRole::prover, Category::resist,
                           e.round, e.id});
          } else if (is_corrected(rec.initial.is_correct, c, r)) {
            out.push_back({render_revise_prompt(q, rec.initial, c), r.text, SampleRole::prover, Category::corrected,
                           e.round, e.id});
          }
        }
      }
    }
  }
  return out;
}

namespace {

template <typename Pred>
std::vector<TrainingSample> select_critiques(const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                             SampleRole role, Pred selected) {
  std::vector<TrainingSample> out;
  for (const auto& e : episodes) {
    if (e.failed) continue;
    const auto& q = question_for(questions, e);
    for (const auto& rec : e.attempts) {
      if (rec.initial.failed) continue;
      for (const auto& c : rec.critiques) {
        if (selected(c)) {
          out.push_back({render_critic_prompt(q, rec.initial), c.text, role, Category::critique, e.round, e.id});
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<TrainingSample> select_helpful_critiques(const std::vector<Episode>& episodes,
                                                     const QuestionIndex& questions, const SelectionConfig& config) {
  return select_critiques(episodes, questions, SampleRole::helpful,
                          [&](const Critique& c) { return helpful_selected(c, config); });
}

std::vector<TrainingSample> select_misleading_critiques(const std::vector<Episode>& episodes,
                                                        const QuestionIndex& questions,
                                                        const SelectionConfig& config) {
  return select_critiques(episodes, questions, SampleRole::misleading,
                          [&](const Critique& c) { return misleading_selected(c, config); });
}

DatasetBundle select_round(const std::vector<Episode>& episodes, const QuestionIndex& questions, int round,
                           const SelectionConfig& config) {
  DatasetBundle b;
  b.round = round;
  b.d_prover = select_prover_samples(episodes, questions, config);
  b.d_helpful = select_helpful_critiques(episodes, questions, config);
  b.d_misleading = select_misleading_critiques(episodes, questions, config);
  return union_bundles(DatasetBundle{round, {}, {}, {}}, b);
}

std::vector<TrainingSample> cap_categories(const std::vector<TrainingSample>& samples,
                                           const std::vector<Category>& categories, std::size_t cap,
                                           std::uint64_t seed) {
  // Random keys per sample; each capped category keeps its `cap` smallest keys.
  std::vector<bool> keep(samples.size(), true);
  for (auto category : categories) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].category != category) continue;
      std::uint64_t h = fnv1a64(sample_key(samples[i]), splitmix64(seed));
      keyed.emplace_back(splitmix64(h ^ i), i);
    }
    if (keyed.size() <= cap) continue;
    std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(cap), keyed.end());
    for (std::size_t k = cap; k < keyed.size(); ++k) keep[keyed[k].second] = false;
  }
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (keep[i]) out.push_back(samples[i]);
  }
  return out;
}

std::vector<TrainingSample> balance_prover_dataset(const std::vector<TrainingSample>& samples, std::size_t cap,
                                                   std::uint64_t seed) {
  return cap_categories(samples, {Category::first_try, Category::resist, Category::corrected}, cap, seed);
}

DatasetBundle union_bundles(const DatasetBundle& base, const DatasetBundle& extra) {
  auto merge = [](const std::vector<TrainingSample>& a, const std::vector<TrainingSample>& b) {
    std::set<std::string> seen;
    std::vector<TrainingSample> out;
    for (const auto* set : {&a, &b}) {
      for (const auto& s : *set) {
        if (seen.insert(sample_key(s)).second) out.push_back(s);
      }
    }
    return out;
  };
  DatasetBundle out;
  out.round = std::max(base.round, extra.round);
  out.d_prover = merge(base.d_prover, extra.d_prover);
  out.d_helpful = merge(base.d_helpful, extra.d_helpful);
  out.d_misleading = merge(base.d_misleading, extra.d_misleading);
  return out;
}

DatasetBundle merge_rounds(const DatasetBundle& current, const DatasetBundle& previous) {
  if (previous.round != current.round - 1) {
    throw SequencingError(
        fmt::format("cannot merge round {} into round {}: rounds must be consecutive", previous.round, current.round));
  }
  DatasetBundle out = union_bundles(previous, current);
  out.round = current.round;
  return out;
}

std::vector<PreferencePair> export_dpo_pairs(const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                             std::uint64_t seed) {
  std::vector<PreferencePair> out;
  for (const auto& e : episodes) {
    if (e.failed) continue;
    const auto& q = question_for(questions, e);
    for (const auto& rec : e.attempts) {
      if (rec.initial.failed) continue;
      for (const auto& c : rec.critiques) {
        // The prover wins a context by ending correct: resisting a misleading
        // critique or accepting a helpful one.
        std::vector<const Attempt*> wins, losses;
        for (const auto& r : c.revisions) {
          if (r.failed) continue;
          (r.is_correct ? wins : losses).push_back(&r);
        }
        if (wins.empty() || losses.empty()) continue;
        std::uint64_t ctx = derive_seed(seed, e.id, "dpo", rec.initial.sample_index, c.sample_index);
        auto pick = [&](const std::vector<const Attempt*>& v, std::uint64_t draw) {
          auto k = static_cast<std::size_t>(unit_uniform(ctx, draw) * static_cast<double>(v.size()));
          return v[std::min(k, v.size() - 1)];
        };
        out.push_back({render_revise_prompt(q, rec.initial, c), pick(wins, 0)->text, pick(losses, 1)->text, e.id});
      }
    }
  }
  return out;
}

std::vector<AuditFailure> audit_samples(const std::vector<TrainingSample>& samples,
                                        const std::vector<Episode>& episodes, const QuestionIndex& questions,
                                        const SelectionConfig& config) {
  std::map<std::string, const Episode*> by_id;
  for (const auto& e : episodes) by_id[e.id] = &e;

  std::vector<AuditFailure> failures;
  for (std::size_t idx = 0; idx < samples.size(); ++idx) {
    const auto& s = samples[idx];
    if (s.target.empty()) {
      failures.push_back({idx, "empty target"});
      continue;
    }
    if (s.category != Category::first_try && s.category != Category::resist && s.category != Category::corrected &&
        s.category != Category::critique) {
      continue;  // generator datasets are not episode-backed
    }
    if ((s.category == Category::critique) == (s.role == SampleRole::prover)) {
      failures.push_back({idx, "category inconsistent with role"});
      continue;
    }
    auto it = by_id.find(s.source_episode_id);
    if (it == by_id.end()) {
      failures.push_back({idx, "source episode '" + s.source_episode_id + "' not found"});
      continue;
    }
    const Episode& e = *it->second;
    auto qit = questions.find(e.question_id);
    if (qit == questions.end()) {
      failures.push_back({idx, "question '" + e.question_id + "' not found"});
      continue;
    }
    const Question& q = qit->second;

    // Re-grade from text rather than trusting the stored flags.
    bool justified = false;
    for (const auto& rec : e.attempts) {
      if (justified) break;
      if (rec.initial.failed) continue;
      Attempt initial = grade_attempt(rec.initial.text, q.truth, rec.initial.sample_index);
      if (s.category == Category::first_try) {
        justified = initial.is_correct && s.target == initial.text && s.messages == render_question_prompt(q) &&
                    prover_passes(config);
        continue;
      }
      for (const auto& c : rec.critiques) {
        if (justified) break;
        Critique regraded = c;
        for (auto& r : regraded.revisions) {
          if (!r.failed) r = grade_revision(r.text, initial, q.truth, r.sample_index);
        }
        if (s.category == Category::critique) {
          bool selected = s.role == SampleRole::helpful ? !initial.is_correct && helpful_selected(regraded, config)
                                                        : initial.is_correct && misleading_selected(regraded, config);
          justified = selected && s.target == c.text && s.messages == render_critic_prompt(q, initial);
          continue;
        }
        for (const auto& r : regraded.revisions) {
          bool ok = s.category == Category::resist ? is_resist(initial.is_correct, c, r)
                                                   : is_corrected(initial.is_correct, c, r);
          if (ok && s.target == r.text && s.messages == render_revise_prompt(q, initial, c) &&
              prover_passes(config)) {
            justified = true;
            break;
          }
        }
      }
    }
    if (!justified) {
      failures.push_back({idx, fmt::format("{} sample not justified by episode {}", to_string(s.category), e.id)});
    }
  }
  return failures;
}

}  // namespace cdg
