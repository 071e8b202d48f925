#pragma once

// JSON mappings for the domain types. Field names match the on-disk schemas.

#include "json.hpp"

#include "cdg/backends.hpp"
#include "cdg/eval.hpp"
#include "cdg/game.hpp"
#include "cdg/selector.hpp"
#include "cdg/templates.hpp"

namespace cdg {

void to_json(nlohmann::json& j, const ChatMessage& m);
void from_json(const nlohmann::json& j, ChatMessage& m);

void to_json(nlohmann::json& j, const SamplingParams& p);
void from_json(const nlohmann::json& j, SamplingParams& p);

void to_json(nlohmann::json& j, const Attempt& a);
void from_json(const nlohmann::json& j, Attempt& a);

void to_json(nlohmann::json& j, const RevisionStats& s);
void from_json(const nlohmann::json& j, RevisionStats& s);

void to_json(nlohmann::json& j, const Critique& c);
void from_json(const nlohmann::json& j, Critique& c);

void to_json(nlohmann::json& j, const AttemptRecord& r);
void from_json(const nlohmann::json& j, AttemptRecord& r);

void to_json(nlohmann::json& j, const RoleRewards& r);
void from_json(const nlohmann::json& j, RoleRewards& r);

void to_json(nlohmann::json& j, const Episode& e);
void from_json(const nlohmann::json& j, Episode& e);

void to_json(nlohmann::json& j, const Fanout& f);
void from_json(const nlohmann::json& j, Fanout& f);

void to_json(nlohmann::json& j, const GameConfig& c);
void from_json(const nlohmann::json& j, GameConfig& c);

void to_json(nlohmann::json& j, const Question& q);
void from_json(const nlohmann::json& j, Question& q);

void to_json(nlohmann::json& j, const TrainingSample& s);
void from_json(const nlohmann::json& j, TrainingSample& s);

void to_json(nlohmann::json& j, const PreferencePair& p);
void from_json(const nlohmann::json& j, PreferencePair& p);

void to_json(nlohmann::json& j, const BackendSpec& s);
void from_json(const nlohmann::json& j, BackendSpec& s);

void to_json(nlohmann::json& j, const ErrorDetectionItem& item);
void from_json(const nlohmann::json& j, ErrorDetectionItem& item);

void to_json(nlohmann::json& j, const EvalReport& r);

Intent intent_from_string(std::string_view s);
SampleRole sample_role_from_string(std::string_view s);
Category category_from_string(std::string_view s);
ThresholdMode threshold_mode_from_string(std::string_view s);
std::string_view to_string(ThresholdMode mode);

}  // namespace cdg
