#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "doctest.h"

#include "cdg/errors.hpp"
#include "cdg/selector.hpp"
#include "support/oracles.hpp"

using namespace cdg;
using testing::AttemptSpec;
using testing::RevKind;

namespace {

constexpr auto C = RevKind::correct;
constexpr auto W = RevKind::wrong;
constexpr auto M = RevKind::marker;
constexpr auto MW = RevKind::marker_then_wrong;
constexpr auto F = RevKind::failed;

QuestionIndex oracle_index() {
  return {{"oracle", make_question("oracle", "What is 3 times 4?", testing::kOracleTruth)}};
}

std::vector<Episode> one(const std::vector<AttemptSpec>& specs) {
  auto e = testing::build_episode(specs);
  e.rewards = compute_rewards(e, 1.0);
  return {e};
}

std::size_t helpful_count(const std::vector<AttemptSpec>& specs, SelectionConfig cfg = {}) {
  return select_helpful_critiques(one(specs), oracle_index(), cfg).size();
}

std::size_t misleading_count(const std::vector<AttemptSpec>& specs, SelectionConfig cfg = {}) {
  return select_misleading_critiques(one(specs), oracle_index(), cfg).size();
}

TrainingSample sample(int i, SampleRole role = SampleRole::prover, Category cat = Category::first_try) {
  return {{{ChatRole::user, fmt::format("prompt {}", i)}}, fmt::format("target {}", i), role, cat, 1, "e"};
}

}  // namespace

TEST_CASE("required successes") {
  using M_ = ThresholdMode;
  CHECK(required_successes(0.5, 4, M_::at_least) == 2);
  CHECK(required_successes(0.75, 4, M_::at_least) == 3);
  CHECK(required_successes(0.5, 4, M_::exceeding) == 3);
  CHECK(required_successes(0.75, 4, M_::exceeding) == 4);
  CHECK(required_successes(0.3, 10, M_::at_least) == 3);
  CHECK(required_successes(0.3, 10, M_::exceeding) == 4);
  CHECK(required_successes(0.5, 3, M_::at_least) == 2);
  CHECK(required_successes(0.0, 4, M_::at_least) == 0);
  CHECK(required_successes(1.0, 4, M_::exceeding) == 5);
}

TEST_CASE("helpful critique thresholds") {
  CHECK(helpful_count({{false, false, {{C, C, W, W}}}}) == 1);
  CHECK(helpful_count({{false, false, {{C, W, W, W}}}}) == 0);
  CHECK(helpful_count({{false, false, {{C, M, W, W}}}}) == 0);
  // Denominator is graded revisions only.
  CHECK(helpful_count({{false, false, {{C, F, F, W}}}}) == 1);
  CHECK(helpful_count({{false, false, {{F, F, F, F}, {C, C, C, C}}}}) == 1);
}

TEST_CASE("misleading critique thresholds") {
  CHECK(misleading_count({{false, true, {{W, W, W, M}}}}) == 1);
  CHECK(misleading_count({{false, true, {{W, W, M, M}}}}) == 0);
  CHECK(misleading_count({{false, true, {{MW, MW, MW, M}}}}) == 0);
  CHECK(misleading_count({{false, true, {{W, W, W, C}}}}) == 1);
  SelectionConfig strict;
  strict.mode = ThresholdMode::exceeding;
  CHECK(misleading_count({{false, true, {{W, W, W, M}}}}, strict) == 0);
  CHECK(misleading_count({{false, true, {{W, W, W, W}}}}, strict) == 1);
}

TEST_CASE("prover samples") {
  auto idx = oracle_index();
  auto right = select_prover_samples(one({{false, true, {{M, W, MW, C}}}}), idx);
  std::map<Category, int> cats;
  for (const auto& s : right) cats[s.category]++;
  CHECK(cats[Category::first_try] == 1);
  CHECK(cats[Category::resist] == 2);
  CHECK(cats[Category::corrected] == 0);

  auto wrong = select_prover_samples(one({{false, false, {{C, W, M, C}}}}), idx);
  cats.clear();
  for (const auto& s : wrong) cats[s.category]++;
  CHECK(cats[Category::first_try] == 0);
  CHECK(cats[Category::corrected] == 2);
  CHECK(cats[Category::resist] == 0);

  SelectionConfig never;
  never.tau_prover = 1.0;
  never.mode = ThresholdMode::exceeding;
  CHECK(select_prover_samples(one({{false, true, {{M}}}}), idx, never).empty());

  CHECK(select_prover_samples(one({{true, true, {}}, {false, false, {{C}}}}), idx).size() == 1);
  CHECK_THROWS_AS(select_prover_samples(one({{false, true, {{M}}}}), {}), ContractError);
}

TEST_CASE("selection is monotone in tau") {
  std::mt19937_64 rng(17);
  auto idx = oracle_index();
  for (int i = 0; i < 300; ++i) {
    auto spec = testing::random_episode_spec(rng);
    auto e = testing::build_episode(spec);
    std::vector<Episode> es{e};
    std::size_t prev_h = SIZE_MAX, prev_m = SIZE_MAX;
    for (double tau : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      SelectionConfig cfg{0.5, tau, tau, ThresholdMode::at_least};
      auto h = select_helpful_critiques(es, idx, cfg).size();
      auto m = select_misleading_critiques(es, idx, cfg).size();
      CHECK(h <= prev_h);
      CHECK(m <= prev_m);
      prev_h = h, prev_m = m;
      SelectionConfig ex = cfg;
      ex.mode = ThresholdMode::exceeding;
      CHECK(select_helpful_critiques(es, idx, ex).size() <= h);
      CHECK(select_misleading_critiques(es, idx, ex).size() <= m);
    }
  }
}

TEST_CASE("selected samples pass the audit and tampering is caught") {
  std::mt19937_64 rng(23);
  auto idx = oracle_index();
  std::vector<Episode> episodes;
  for (int i = 0; i < 40; ++i) {
    auto e = testing::build_episode(testing::random_episode_spec(rng), fmt::format("oracle-{}", i));
    e.question_id = "oracle";
    episodes.push_back(e);
  }
  auto b = select_round(episodes, idx, 1);
  REQUIRE(b.size() > 0);
  std::vector<TrainingSample> all = b.d_prover;
  all.insert(all.end(), b.d_helpful.begin(), b.d_helpful.end());
  all.insert(all.end(), b.d_misleading.begin(), b.d_misleading.end());
  CHECK(audit_samples(all, episodes, idx).empty());

  auto bad = all;
  bad[0].target += " tampered";
  bad.push_back(all[0]);
  bad.back().source_episode_id = "nowhere";
  bad.push_back(all[0]);
  bad.back().role = SampleRole::helpful;
  bad.back().category = Category::first_try;
  auto failures = audit_samples(bad, episodes, idx);
  CHECK(failures.size() == 3);
  CHECK(failures[0].index == 0);

  // Flags on disk are not trusted: flipping a stored grade does not help a
  // sample that the text does not support.
  auto forged = episodes;
  for (auto& e : forged)
    for (auto& rec : e.attempts) rec.initial.is_correct = !rec.initial.is_correct;
  auto forged_sel = select_prover_samples(forged, idx);
  std::size_t first_try = 0;
  for (const auto& s : forged_sel) first_try += s.category == Category::first_try;
  if (first_try > 0) CHECK_FALSE(audit_samples(forged_sel, forged, idx).empty());
}

TEST_CASE("round selection collapses exact duplicates") {
  auto idx = oracle_index();
  auto spec = std::vector<AttemptSpec>{{false, true, {{M, M, M, M}}}};
  auto b = select_round(one(spec), idx, 1);
  // Four identical resist replies to one context are one sample.
  std::size_t resist = 0;
  for (const auto& s : b.d_prover) resist += s.category == Category::resist;
  CHECK(resist == 1);
  CHECK(b.round == 1);
}

TEST_CASE("cross-round union") {
  DatasetBundle r1{1, {}, {}, {}}, r2{2, {}, {}, {}};
  for (int i = 0; i < 100; ++i) r1.d_prover.push_back(sample(i));
  for (int i = 100; i < 180; ++i) r2.d_prover.push_back(sample(i));
  auto merged = merge_rounds(r2, r1);
  CHECK(merged.d_prover.size() == 180);
  CHECK(merged.round == 2);
  CHECK(merged.d_prover.front() == r1.d_prover.front());

  DatasetBundle shared{2, {}, {}, {}};
  for (int i = 70; i < 150; ++i) shared.d_prover.push_back(sample(i));
  CHECK(merge_rounds(shared, r1).d_prover.size() == 150);

  CHECK(union_bundles(merged, r2) == union_bundles(union_bundles(merged, r2), r2));
  CHECK(union_bundles(merged, merged) == merged);

  DatasetBundle r3{3, {}, {}, {}};
  CHECK_THROWS_AS(merge_rounds(r3, r1), SequencingError);
  CHECK_THROWS_AS(merge_rounds(r1, r2), SequencingError);

  // Round tags do not affect identity: a later copy of the same pair is dropped.
  auto again = r1;
  again.round = 2;
  for (auto& s : again.d_prover) s.round_added = 2;
  CHECK(merge_rounds(again, r1).d_prover.size() == 100);
}

TEST_CASE("category capping") {
  std::vector<TrainingSample> s;
  for (int i = 0; i < 50; ++i) s.push_back(sample(i, SampleRole::prover, Category::first_try));
  for (int i = 50; i < 60; ++i) s.push_back(sample(i, SampleRole::prover, Category::resist));
  for (int i = 60; i < 90; ++i) s.push_back(sample(i, SampleRole::prover, Category::corrected));
  auto out = balance_prover_dataset(s, 20, 5);
  std::map<Category, int> c;
  for (const auto& x : out) c[x.category]++;
  CHECK(c[Category::first_try] == 20);
  CHECK(c[Category::resist] == 10);
  CHECK(c[Category::corrected] == 20);
  CHECK(out == balance_prover_dataset(s, 20, 5));
  CHECK(out != balance_prover_dataset(s, 20, 6));
  // Input order survives.
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(std::stoi(out[i - 1].target.substr(7)) < std::stoi(out[i].target.substr(7)));
  auto pass = cap_categories(s, {Category::resist}, 2, 1);
  CHECK(pass.size() == 82);
}

TEST_CASE("capping draws uniformly") {
  std::vector<TrainingSample> s;
  for (int i = 0; i < 20; ++i) s.push_back(sample(i));
  std::map<std::string, double> hits;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    for (const auto& x : cap_categories(s, {Category::first_try}, 5, static_cast<std::uint64_t>(t))) hits[x.target]++;
  }
  REQUIRE(hits.size() == 20);
  const double expected = trials * 5.0 / 20.0;
  double chi2 = 0;
  for (const auto& [k, v] : hits) chi2 += (v - expected) * (v - expected) / expected;
  boost::math::chi_squared dist(19);
  double p = 1.0 - boost::math::cdf(dist, chi2);
  CAPTURE(chi2);
  CHECK(p > 0.001);
}

TEST_CASE("DPO pairs") {
  auto idx = oracle_index();
  auto pairs = export_dpo_pairs(one({{false, false, {{C, W, C, W}}}}), idx, 1);
  REQUIRE(pairs.size() == 1);
  CHECK(is_correct(pairs[0].chosen, testing::kOracleTruth));
  CHECK_FALSE(is_correct(pairs[0].rejected, testing::kOracleTruth));
  CHECK(pairs[0].messages.size() == 3);

  CHECK(export_dpo_pairs(one({{false, false, {{C, C, C, C}}}}), idx, 1).empty());
  CHECK(export_dpo_pairs(one({{false, false, {{W, W, F, F}}}}), idx, 1).empty());

  // Resisting a misleading critique is the winning move.
  auto resist = export_dpo_pairs(one({{false, true, {{M, W}}}}), idx, 1);
  REQUIRE(resist.size() == 1);
  CHECK(detect_resist_marker(resist[0].chosen));

  auto two = export_dpo_pairs(one({{false, true, {{M, W}, {C, C}, {MW, M}}}}), idx, 1);
  CHECK(two.size() == 2);
  CHECK(two == export_dpo_pairs(one({{false, true, {{M, W}, {C, C}, {MW, M}}}}), idx, 1));
}

TEST_CASE("category counts") {
  DatasetBundle b{1, {sample(1), sample(2, SampleRole::prover, Category::resist)},
                  {sample(3, SampleRole::helpful, Category::critique)}, {}};
  auto counts = b.category_counts();
  CHECK(counts["prover/first_try"] == 1);
  CHECK(counts["prover/resist"] == 1);
  CHECK(counts["helpful/critique"] == 1);
  CHECK(b.size() == 3);
}
