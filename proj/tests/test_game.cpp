#include <random>

#include "doctest.h"

#include "cdg/errors.hpp"
#include "cdg/game.hpp"
#include "support/oracles.hpp"
#include "support/scripted.hpp"

using namespace cdg;
using testing::AttemptSpec;
using testing::RevKind;

namespace {

void check_against_oracle(const std::vector<AttemptSpec>& specs, double eta) {
  auto oracle = testing::brute_force_rewards(specs, Rational(static_cast<long>(eta * 4), 4));
  auto episode = testing::build_episode(specs);
  if (!oracle.prover) {
    CHECK_THROWS_AS(compute_rewards(episode, eta), UndefinedRewardError);
    return;
  }
  auto r = compute_rewards(episode, eta);
  CHECK(r.prover == testing::to_double(*oracle.prover));
  CHECK(r.helpful == testing::to_double(*oracle.helpful));
  CHECK(r.misleading == testing::to_double(*oracle.misleading));
  CHECK(r.eta == eta);
}

}  // namespace

TEST_CASE("rewards match the brute-force oracle on the exhaustive single-attempt space") {
  auto space = testing::enumerate_single_attempt_space();
  CHECK(space.size() == 2 * 625);
  for (const auto& specs : space) check_against_oracle(specs, 1.0);
}

TEST_CASE("rewards match the oracle on random multi-attempt episodes") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 3000; ++i) {
    auto specs = testing::random_episode_spec(rng);
    check_against_oracle(specs, i % 2 ? 1.0 : 0.5);
  }
}

TEST_CASE("critic routing") {
  CHECK(assign_critic_intent(true) == Intent::misleading);
  CHECK(assign_critic_intent(false) == Intent::helpful);
}

TEST_CASE("resist marker inherits the initial grade") {
  auto truth = canonicalize("12");
  auto right = grade_attempt(scripted::correct_solution("12"), truth);
  auto wrong = grade_attempt(scripted::wrong_solution("24"), truth);
  REQUIRE(right.is_correct);
  REQUIRE_FALSE(wrong.is_correct);

  auto kept = grade_revision(scripted::resist_reply(), right, truth);
  CHECK(kept.is_correct);
  CHECK(kept.resisted);
  CHECK(classify_outcome(right, kept) == Outcome::resisted);

  auto stuck = grade_revision(scripted::resist_reply(), wrong, truth);
  CHECK_FALSE(stuck.is_correct);
  CHECK(classify_outcome(wrong, stuck) == Outcome::uncorrected);

  auto drifted = grade_revision(testing::revision_text(RevKind::marker_then_wrong), right, truth);
  CHECK(drifted.resisted);
  CHECK_FALSE(drifted.is_correct);
  CHECK(classify_outcome(right, drifted) == Outcome::resist_but_wrong_path);

  auto misled = grade_revision(scripted::revised_reply("24"), right, truth);
  CHECK(classify_outcome(right, misled) == Outcome::misled);
  auto fixed = grade_revision(scripted::revised_reply("12"), wrong, truth);
  CHECK(classify_outcome(wrong, fixed) == Outcome::corrected);

  CHECK(classify_initial(right) == Outcome::first_try_win);
  CHECK_FALSE(classify_initial(wrong));
}

TEST_CASE("revision tallies") {
  std::vector<Attempt> revs = {testing::make_attempt(true), testing::make_attempt(false, true),
                               testing::make_attempt(false), testing::make_attempt(false, false, true)};
  auto s = tally_revisions(revs);
  CHECK(s.n_revisions == 3);
  CHECK(s.n_correct == 1);
  CHECK(s.n_resisted == 1);
  CHECK(s.n_misled == 1);
  CHECK(s.n_failed == 1);
}

TEST_CASE("per-critique rewards enforce intent") {
  auto helpful = testing::make_critique(Intent::helpful, {testing::make_attempt(true), testing::make_attempt(false)});
  auto misleading =
      testing::make_critique(Intent::misleading, {testing::make_attempt(false), testing::make_attempt(false),
                                                  testing::make_attempt(true), testing::make_attempt(false)});
  CHECK(helpful_critique_reward(helpful) == 0.5);
  CHECK(misleading_critique_reward(misleading) == 0.75);
  CHECK_THROWS_AS(misleading_critique_reward(helpful), RoleMismatchError);
  CHECK_THROWS_AS(helpful_critique_reward(misleading), RoleMismatchError);

  auto empty = testing::make_critique(Intent::helpful, {testing::make_attempt(false, false, true)});
  CHECK_THROWS_AS(helpful_critique_reward(empty), UndefinedRewardError);
}

TEST_CASE("reward bounds") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    auto specs = testing::random_episode_spec(rng);
    auto e = testing::build_episode(specs);
    try {
      auto r = compute_rewards(e, 1.0);
      CHECK(r.prover >= 0.0);
      CHECK(r.prover <= 2.0);
      CHECK(r.helpful >= 0.0);
      CHECK(r.helpful <= 1.0);
      CHECK(r.misleading >= 0.0);
      CHECK(r.misleading <= 1.0);
    } catch (const UndefinedRewardError&) {
    }
  }
}

TEST_CASE("config validation") {
  GameConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau_misleading = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.fanout.n_revisions = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.eta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
