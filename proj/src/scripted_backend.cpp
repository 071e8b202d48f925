#include <regex>

#include <fmt/format.h>

#include "cdg/backends.hpp"
#include "cdg/digest.hpp"
#include "cdg/errors.hpp"

namespace cdg {

namespace scripted {

std::string correct_solution(std::string_view answer) {
  return fmt::format(
      "We restate the problem and identify the quantities involved.\n\n"
      "We carry out the computation step by step.\n\n"
      "Therefore, the final answer is: $\\boxed{{{}}}$. I hope it is correct.",
      answer);
}

std::string wrong_solution(std::string_view wrong_answer) {
  return fmt::format(
      "We restate the problem and identify the quantities involved.\n\n"
      "We carry out the computation step by step, but one intermediate value is miscomputed. {}\n\n"
      "Therefore, the final answer is: $\\boxed{{{}}}$. I hope it is correct.",
      kFlawSentinel, wrong_answer);
}

std::string critique_text(std::string_view tag, std::string_view intent, int variant) {
  return fmt::format(
      "Step: \"We carry out the computation step by step.\"\n"
      "Analysis: The intermediate value needs to be checked.\n"
      "**Critic** The first mistake can be found in: 'We carry out the computation step by step.' "
      "The issue is: 'The intermediate value is miscomputed ({} note {}).' [critic:{}]",
      intent, variant, tag);
}

std::string resist_reply() {
  return "The critique does not point to a real error; the original reasoning stands.\n\n"
         "$\\boxed{\\text{This critic is not critical.}}$";
}

std::string revised_reply(std::string_view answer) {
  return fmt::format(
      "The critique is valid, so I revise starting from the flagged step.\n\n"
      "Therefore, the revised answer is: $\\boxed{{{}}}$.",
      answer);
}

std::string default_wrong_answer(std::string_view truth) {
  auto c = canonicalize(truth);
  if (c.exact) {
    Rational next = *c.exact + 1;
    auto num = boost::multiprecision::numerator(next);
    auto den = boost::multiprecision::denominator(next);
    return den == 1 ? num.str() : num.str() + "/" + den.str();
  }
  return fmt::format("({})+1", truth);
}

}  // namespace scripted

namespace {

struct NumberedStep {
  int index;
  std::string text;
};

// Recovers "Step k: ..." blocks from a rendered annotation or judge prompt.
std::vector<NumberedStep> numbered_steps(const std::string& prompt) {
  static const std::regex header(R"((^|\n)Step (\d+): )");
  std::vector<NumberedStep> steps;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (header start, text start)
  std::vector<int> indices;
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), header); it != std::sregex_iterator(); ++it) {
    spans.emplace_back(static_cast<std::size_t>(it->position(0)),
                       static_cast<std::size_t>(it->position(0) + it->length(0)));
    indices.push_back(std::stoi((*it)[2].str()));
  }
  for (std::size_t i = 0; i < spans.size(); ++i) {
    std::size_t end = i + 1 < spans.size() ? spans[i + 1].first : prompt.size();
    steps.push_back({indices[i], prompt.substr(spans[i].second, end - spans[i].second)});
  }
  return steps;
}

}  // namespace

ScriptedBackend::ScriptedBackend(nlohmann::json script, std::shared_ptr<const AnswerKey> answers, std::string name)
    : script_(std::move(script)), answers_(std::move(answers)), name_(std::move(name)) {
  if (!script_.is_object()) throw ConfigError("scripted backend script must be a JSON object");
  tag_ = script_.value("tag", name_);
}

nlohmann::json ScriptedBackend::identity() const {
  return {{"kind", "scripted"}, {"name", name_}, {"tag", tag_}, {"script_sha256", sha256_hex(script_.dump())}};
}

std::string ScriptedBackend::truth_for(const std::string& question_id) const {
  if (answers_) {
    auto it = answers_->find(question_id);
    if (it != answers_->end()) return it->second;
  }
  throw ScriptedGapError(fmt::format("scripted agent '{}' has no answer for question '{}'", name_, question_id));
}

std::string ScriptedBackend::wrong_for(const std::string& question_id) const {
  if (auto it = script_.find("wrong_answers"); it != script_.end() && it->contains(question_id)) {
    return (*it)[question_id].get<std::string>();
  }
  return scripted::default_wrong_answer(truth_for(question_id));
}

double ScriptedBackend::rule(Turn turn, const std::string& key, double fallback) const {
  const auto& rules = script_["rules"];
  auto name = std::string(to_string(turn));
  if (!rules.contains(name)) return fallback;
  return rules[name].value(key, fallback);
}

std::vector<Completion> ScriptedBackend::sample(const SampleRequest& request) {
  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(request.params.n));
  for (int i = 0; i < request.params.n; ++i) out.push_back(Completion::success(respond(request, i)));
  return out;
}

std::string ScriptedBackend::respond(const SampleRequest& request, int index) const {
  const std::string turn_name(to_string(request.turn));
  if (auto it = script_.find("entries"); it != script_.end()) {
    for (const auto& entry : *it) {
      if (entry.value("question_id", "") != request.question_id) continue;
      if (entry.value("turn", "") != turn_name) continue;
      if (entry.contains("role") && entry["role"].get<std::string>() != to_string(request.role)) continue;
      const auto& texts = entry.at("texts");
      if (texts.empty()) break;
      return texts[static_cast<std::size_t>(index) % texts.size()].get<std::string>();
    }
  }

  if (!script_.contains("rules") || !script_["rules"].contains(turn_name)) {
    throw ScriptedGapError(fmt::format("scripted agent '{}' has no response for question '{}' turn '{}'", name_,
                                       request.question_id, turn_name));
  }

  const std::uint64_t seed = request.params.seed.value_or(0);
  const double u = unit_uniform(seed, static_cast<std::uint64_t>(index));
  const auto& rules = script_["rules"][turn_name];

  auto initial_is_correct = [&] {
    if (request.messages.size() < 2) throw ScriptedGapError("scripted reviser needs a prior solution turn");
    return is_correct(request.messages[1].content, truth_for(request.question_id));
  };

  switch (request.turn) {
    case Turn::initial: {
      if (u < rule(Turn::initial, "p_correct", 1.0)) return scripted::correct_solution(truth_for(request.question_id));
      return scripted::wrong_solution(wrong_for(request.question_id));
    }
    case Turn::critique: {
      int variants = rules.value("variants", 1 << 20);
      std::string_view intent = request.role == AgentRole::misleading ? "misleading" : "helpful";
      return scripted::critique_text(tag_, intent, index % std::max(variants, 1));
    }
    case Turn::revise: {
      static const std::regex critic_tag(R"(\[critic:([^\]]*)\])");
      std::smatch m;
      std::string tag;
      const std::string& last = request.messages.back().content;
      if (std::regex_search(last, m, critic_tag)) tag = m[1].str();
      auto by_critic = [&](const char* table, const char* key, double fallback) {
        if (rules.contains(table) && rules[table].contains(tag)) return rules[table][tag].get<double>();
        return rules.value(key, fallback);
      };
      if (initial_is_correct()) {
        if (u < by_critic("p_resist_by_critic", "p_resist", 1.0)) return scripted::resist_reply();
        return scripted::revised_reply(wrong_for(request.question_id));
      }
      if (u < by_critic("p_fix_by_critic", "p_fix", 0.0)) {
        return scripted::revised_reply(truth_for(request.question_id));
      }
      return scripted::revised_reply(wrong_for(request.question_id));
    }
    case Turn::self_correct: {
      bool keep_truth = initial_is_correct() ? u < rules.value("p_keep", 1.0) : u < rules.value("p_fix", 0.0);
      return scripted::revised_reply(keep_truth ? truth_for(request.question_id) : wrong_for(request.question_id));
    }
    case Turn::annotate: {
      if (u < rules.value("p_garbled", 0.0)) return "The response looks mostly fine to me.";
      int flagged = 1;
      for (const auto& step : numbered_steps(request.messages.back().content)) {
        if (step.text.find(scripted::kFlawSentinel) != std::string::npos) {
          flagged = step.index;
          break;
        }
      }
      return fmt::format("The first error appears in Step \\boxed{{{}}}.", flagged);
    }
    case Turn::judge: {
      if (u < rules.value("p_unparseable", 0.0)) return "It is hard to say.";
      static const std::regex target(R"(Examine Step (\d+))");
      const std::string& prompt = request.messages.back().content;
      std::smatch m;
      if (!std::regex_search(prompt, m, target)) throw ScriptedGapError("judge prompt names no step");
      int step_index = std::stoi(m[1].str());
      bool flawed = false;
      for (const auto& step : numbered_steps(prompt)) {
        if (step.index == step_index) flawed = step.text.find(scripted::kFlawSentinel) != std::string::npos;
      }
      bool accurate = unit_uniform(seed ^ 0x6a75646765ULL, static_cast<std::uint64_t>(index)) <
                      rules.value("p_accurate", 1.0);
      bool says_flawed = accurate ? flawed : !flawed;
      return fmt::format("Step {} is \\boxed{{{}}}.", step_index, says_flawed ? "incorrect" : "correct");
    }
  }
  throw ScriptedGapError("unhandled turn");
}

}  // namespace cdg
