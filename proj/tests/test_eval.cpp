#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "doctest.h"

#include "cdg/errors.hpp"
#include "cdg/eval.hpp"
#include "support/oracles.hpp"
#include "support/scripted.hpp"

using namespace cdg;
using nlohmann::json;

namespace {

// Surface forms of five answer classes; forms in a class are grader-equivalent.
const std::vector<std::vector<std::string>> kClasses = {
    {"\\frac{1}{2}", "0.5", "1/2"},
    {"3", "3.0", "\\frac{6}{2}"},
    {"1.75", "\\frac{7}{4}"},
    {"10", "10.00", "$10$"},
    {"\\sqrt{2}", "1.414213562"},
};

}  // namespace

TEST_CASE("majority vote agrees with count-and-argmax") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> len(1, 12), cls(0, kClasses.size() + 1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::optional<std::string>> completions;
    std::vector<std::optional<std::string>> labels;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) {
      std::size_t c = cls(rng);
      if (c == kClasses.size()) {
        completions.push_back(std::nullopt);
        labels.push_back(std::nullopt);
      } else if (c == kClasses.size() + 1) {
        completions.push_back("I could not finish.");
        labels.push_back(std::nullopt);
      } else {
        const auto& forms = kClasses[c];
        completions.push_back(fmt::format("Therefore, the final answer is: $\\boxed{{{}}}$.", forms[rng() % forms.size()]));
        labels.push_back(std::to_string(c));
      }
    }
    const std::size_t truth_class = rng() % kClasses.size();
    auto vote = majority_vote(completions, canonicalize(kClasses[truth_class][0]));
    auto oracle = testing::brute_force_vote(labels);
    REQUIRE(vote.winner.has_value() == oracle.winner.has_value());
    if (!oracle.winner) continue;
    CHECK(*vote.winner == oracle.first_index);
    CHECK(vote.class_size == oracle.count);
    CHECK(vote.correct == (*oracle.winner == std::to_string(truth_class)));
  }
}

TEST_CASE("majority vote edge cases") {
  auto truth = canonicalize("5");
  auto box = [](std::string a) { return std::optional<std::string>("\\boxed{" + a + "}"); };
  auto tie = majority_vote({box("4"), box("5"), box("5"), box("4")}, truth);
  CHECK(*tie.winner == 0);
  CHECK_FALSE(tie.correct);
  CHECK(tie.classes == 2);
  auto markers = majority_vote({box("This critic is not critical."), box("5")}, truth);
  CHECK(*markers.winner == 1);
  CHECK(markers.correct);
  CHECK_FALSE(majority_vote({std::nullopt}, truth).winner);
}

TEST_CASE("maj@1 is pass@1") {
  auto qs = testing::toy_questions(200);
  auto model = testing::scripted(testing::prover_script(0.5, 1, 0), qs);
  EvalOptions opts;
  opts.run_seed = 4;
  auto pass = eval_pass1(*model, qs, opts);
  auto maj = eval_majority(*model, qs, 1, opts);
  REQUIRE(pass.per_item.size() == maj.per_item.size());
  for (std::size_t i = 0; i < qs.size(); ++i) CHECK(pass.per_item[i]["correct"] == maj.per_item[i]["correct"]);
  CHECK(pass.metrics.at("accuracy") == maj.metrics.at("accuracy"));
  CHECK(pass.metrics.at("accuracy") > 35.0);
  CHECK(pass.metrics.at("accuracy") < 65.0);

  auto better = testing::scripted(testing::prover_script(0.6, 1, 0), qs);
  auto maj8 = eval_majority(*better, qs, 8, opts);
  CHECK(maj8.metrics.at("accuracy") > eval_pass1(*better, qs, opts).metrics.at("accuracy") + 5.0);
  CHECK_THROWS_AS(eval_majority(*model, qs, 0, opts), ConfigError);
}

TEST_CASE("pass@1 counts transport failures as wrong") {
  auto qs = testing::toy_questions(10);
  auto probe = std::make_shared<testing::ProbeBackend>(testing::scripted(testing::prover_script(1, 1, 0), qs));
  probe->fail = [&](const SampleRequest& r) { return r.question_id == qs[3].id; };
  auto report = eval_pass1(*probe, qs);
  CHECK(report.metrics.at("accuracy") == 90.0);
  CHECK(report.per_item[3]["failed"] == true);
  CHECK(report.task == "pass1");
  CHECK(report.config_digest.size() == 64);
}

TEST_CASE("detection metrics closed forms") {
  auto m = detection_metrics({150, 50, 50, 150});
  CHECK(m["accuracy"] == doctest::Approx(75.0));
  CHECK(m["f1"] == doctest::Approx(75.0));
  auto all_pos = detection_metrics({200, 200, 0, 0});
  CHECK(all_pos["accuracy"] == doctest::Approx(50.0));
  CHECK(all_pos["f1"] == doctest::Approx(200.0 / 3.0));
  auto none = detection_metrics({0, 0, 200, 200});
  CHECK(none["f1"] == 0.0);
  CHECK(none["accuracy"] == doctest::Approx(50.0));
}

TEST_CASE("self-correction metrics match hand counts") {
  SelfCorrectionCounts c{40, 10, 5, 8, 17};
  auto m = self_correction_metrics(c);
  CHECK(m["initial_accuracy"] == doctest::Approx(37.5));
  CHECK(m["final_accuracy"] == doctest::Approx(45.0));
  CHECK(m["c2i_rate"] == doctest::Approx(100.0 * 5 / 15));
  CHECK(m["i2c_rate"] == doctest::Approx(100.0 * 8 / 25));
  CHECK(m["overall_correction_rate"] == doctest::Approx(7.5));
  const double acc1 = m["initial_accuracy"] / 100, i2c = m["i2c_rate"] / 100, c2i = m["c2i_rate"] / 100;
  CHECK(std::fabs(m["overall_correction_rate"] / 100 - (i2c * (1 - acc1) - c2i * acc1)) < 1e-9);
}

TEST_CASE("self-correction protocol on planted flips") {
  auto qs = testing::toy_questions(40);
  json entries = json::array();
  SelfCorrectionCounts planted;
  planted.total = qs.size();
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto& q = qs[i];
    bool first = i < 15, second;
    if (i < 10) second = true, ++planted.correct_to_correct;
    else if (i < 15) second = false, ++planted.correct_to_incorrect;
    else if (i < 23) second = true, ++planted.incorrect_to_correct;
    else second = false, ++planted.incorrect_to_incorrect;
    auto wrong = scripted::default_wrong_answer(q.ground_truth);
    entries.push_back({{"question_id", q.id},
                       {"turn", "initial"},
                       {"texts", {first ? scripted::correct_solution(q.ground_truth) : scripted::wrong_solution(wrong)}}});
    entries.push_back({{"question_id", q.id},
                       {"turn", "self_correct"},
                       {"texts", {scripted::revised_reply(second ? q.ground_truth : wrong)}}});
  }
  auto model = testing::scripted({{"entries", entries}}, qs);
  auto report = eval_self_correction(*model, qs);
  auto expected = self_correction_metrics(planted);
  for (const auto& [k, v] : expected) CHECK(report.metrics.at(k) == v);
  CHECK(report.per_item.size() == qs.size());
  CHECK(report.per_item[12]["initial_correct"] == true);
  CHECK(report.per_item[12]["final_correct"] == false);
}

TEST_CASE("error detection set construction and scoring") {
  auto qs = testing::toy_questions(30);
  auto model = testing::scripted(testing::prover_script(0.6, 1, 0), qs, "model");
  auto annotator = testing::scripted({{"rules", {{"annotate", {{"p_garbled", 0.2}}}}}}, qs, "annotator");
  ErrorDetectionBuildOptions bopts;
  bopts.run_seed = 2;
  auto build = build_error_detection_set(*model, *annotator, qs, bopts);
  REQUIRE_FALSE(build.items.empty());
  CHECK(build.questions_retained > 10);
  CHECK(build.questions_retained < 30);
  CHECK(build.annotation_failures > 0);
  std::size_t pos = 0, neg = 0;
  for (const auto& it : build.items) {
    const auto steps = split_steps(it.solution_text).steps;
    REQUIRE(it.step_index >= 1);
    REQUIRE(it.step_index <= static_cast<int>(steps.size()));
    if (it.label == StepLabel::erroneous_step) {
      ++neg;
      CHECK(steps[static_cast<std::size_t>(it.step_index - 1)].find(scripted::kFlawSentinel) != std::string::npos);
    } else {
      ++pos;
      auto q = std::find_if(qs.begin(), qs.end(), [&](const Question& x) { return x.id == it.question_id; });
      CHECK(is_correct(it.solution_text, q->truth));
    }
  }
  CHECK(pos == neg);

  auto perfect = testing::scripted({{"rules", {{"judge", {{"p_accurate", 1.0}}}}}}, qs, "judge");
  auto r = eval_error_detection(*perfect, qs, build.items);
  CHECK(r.metrics.at("accuracy") == 100.0);
  CHECK(r.metrics.at("f1") == 100.0);
  CHECK(r.per_item.size() == build.items.size());

  auto mute = testing::scripted({{"rules", {{"judge", {{"p_unparseable", 1.0}}}}}}, qs, "mute");
  auto m = eval_error_detection(*mute, qs, build.items);
  CHECK(m.metrics.at("unparseable") == static_cast<double>(build.items.size()));
  CHECK(m.metrics.at("accuracy") == 50.0);
  CHECK(m.metrics.at("f1") == 0.0);

  auto bad = build.items;
  bad[0].step_index = 99;
  CHECK_THROWS_AS(eval_error_detection(*perfect, qs, bad), ContractError);

  bopts.per_label = 3;
  CHECK(build_error_detection_set(*model, *annotator, qs, bopts).items.size() == 6);
}

TEST_CASE("noisy judge lands near its accuracy") {
  auto qs = testing::toy_questions(200);
  auto model = testing::scripted(testing::prover_script(0.7, 1, 0), qs, "model");
  auto annotator = testing::scripted({{"rules", {{"annotate", json::object()}}}}, qs, "annotator");
  auto build = build_error_detection_set(*model, *annotator, qs, {});
  auto judge = testing::scripted({{"rules", {{"judge", {{"p_accurate", 0.8}}}}}}, qs, "judge");
  auto r = eval_error_detection(*judge, qs, build.items);
  CHECK(build.items.size() > 300);
  CHECK(r.metrics.at("accuracy") == doctest::Approx(80.0).epsilon(0.08));
}

namespace {

std::vector<NamedBackend> critics(const std::vector<std::string>& tags, const std::vector<Question>& qs) {
  std::vector<NamedBackend> out;
  for (const auto& t : tags) out.push_back({t, testing::scripted(testing::critic_script(t), qs, t)});
  return out;
}

}  // namespace

TEST_CASE("win-rate cells track designed rates") {
  auto qs = testing::toy_questions(300);
  auto script = testing::prover_script(0.5, 0, 0);
  script["rules"]["revise"]["p_fix_by_critic"] = {{"h-strong", 0.8}, {"h-weak", 0.3}};
  script["rules"]["revise"]["p_resist_by_critic"] = {{"m-weak", 0.9}, {"m-strong", 0.4}};
  std::vector<NamedBackend> provers = {{"p", testing::scripted(script, qs, "p")}};
  auto helpful = critics({"h-strong", "h-weak"}, qs);
  auto misleading = critics({"m-weak", "m-strong"}, qs);
  WinRateOptions opts;
  opts.run_seed = 8;
  auto r = eval_winrate_matrix(provers, helpful, misleading, qs, opts);
  CHECK(r.metrics.at("cooperative/p/h-strong") == doctest::Approx(80.0).epsilon(0.08));
  CHECK(r.metrics.at("cooperative/p/h-weak") == doctest::Approx(30.0).epsilon(0.2));
  CHECK(r.metrics.at("adversarial/p/m-weak") == doctest::Approx(90.0).epsilon(0.06));
  CHECK(r.metrics.at("adversarial/p/m-strong") == doctest::Approx(40.0).epsilon(0.15));
  CHECK(r.extra["cooperative"]["p"]["h-strong"] == r.metrics.at("cooperative/p/h-strong"));
  const auto coop_n = r.extra["questions_per_cell"]["cooperative"]["p"]["h-weak"].get<std::size_t>();
  const auto adv_n = r.extra["questions_per_cell"]["adversarial"]["p"]["m-weak"].get<std::size_t>();
  CHECK(coop_n + adv_n == qs.size());

  auto shuffled = qs;
  std::mt19937 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto again = eval_winrate_matrix(provers, helpful, misleading, shuffled, opts);
  CHECK(again.metrics == r.metrics);
}

TEST_CASE("win-rate input validation") {
  auto qs = testing::toy_questions(3);
  std::vector<NamedBackend> provers = {{"p", testing::scripted(testing::prover_script(0.5, 0.5, 0.5), qs)}};
  CHECK_THROWS_AS(eval_winrate_matrix(provers, critics({"h"}, qs), critics({"m"}, qs), {}), ConfigError);
  CHECK_THROWS_AS(eval_winrate_matrix(provers, {}, critics({"m"}, qs), qs), ConfigError);
  CHECK_THROWS_AS(eval_winrate_matrix({}, critics({"h"}, qs), critics({"m"}, qs), qs), ConfigError);
}
