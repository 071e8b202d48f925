#include "cdg/backends.hpp"

#include <fmt/format.h>

#include "cdg/errors.hpp"

namespace cdg {

std::string_view to_string(AgentRole role) {
  switch (role) {
    case AgentRole::prover: return "prover";
    case AgentRole::helpful: return "helpful";
    case AgentRole::misleading: return "misleading";
    case AgentRole::annotator: return "annotator";
  }
  return "prover";
}

std::string_view to_string(Turn turn) {
  switch (turn) {
    case Turn::initial: return "initial";
    case Turn::critique: return "critique";
    case Turn::revise: return "revise";
    case Turn::self_correct: return "self_correct";
    case Turn::annotate: return "annotate";
    case Turn::judge: return "judge";
  }
  return "initial";
}

Turn turn_from_string(std::string_view s) {
  for (Turn t : {Turn::initial, Turn::critique, Turn::revise, Turn::self_correct, Turn::annotate, Turn::judge}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError(fmt::format("unknown turn '{}'", s));
}

std::vector<Completion> sample_completions(Backend& backend, const SampleRequest& request) {
  if (request.params.n < 1) throw ContractError("sample_completions needs n >= 1");
  auto out = backend.sample(request);
  if (out.size() > static_cast<std::size_t>(request.params.n)) out.resize(static_cast<std::size_t>(request.params.n));
  while (out.size() < static_cast<std::size_t>(request.params.n)) out.push_back(Completion::failed("missing sample"));
  return out;
}

void BackendSpec::validate() const {
  if (kind == BackendKind::remote && (!endpoint_url || endpoint_url->empty())) {
    throw ConfigError("remote backend requires endpoint_url");
  }
  if (kind == BackendKind::scripted && !script) throw ConfigError("scripted backend requires a script");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

std::shared_ptr<Backend> make_backend(const BackendSpec& spec, std::shared_ptr<const AnswerKey> answers) {
  spec.validate();
  if (spec.kind == BackendKind::remote) return std::make_shared<RemoteBackend>(spec);
  return std::make_shared<ScriptedBackend>(*spec.script, std::move(answers),
                                           spec.model_name.empty() ? "scripted" : spec.model_name);
}

}  // namespace cdg
