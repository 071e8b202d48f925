#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <semaphore>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cdg/backends.hpp"
#include "cdg/errors.hpp"

namespace cdg {

struct RemoteBackend::Impl {
  std::string origin;  // scheme://host[:port]
  std::string path;
  std::counting_semaphore<1024> in_flight;

  explicit Impl(int cap) : in_flight(std::clamp(cap, 1, 1024)) {}
};

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw ConfigError("malformed endpoint_url '" + url + "'");
  std::string path = m[2].matched ? m[2].str() : "/v1/chat/completions";
  return {m[1].str(), path};
}

}  // namespace

RemoteBackend::RemoteBackend(BackendSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  impl_ = std::make_unique<Impl>(spec_.max_in_flight);
  std::tie(impl_->origin, impl_->path) = split_url(*spec_.endpoint_url);
}

RemoteBackend::~RemoteBackend() = default;

nlohmann::json RemoteBackend::identity() const {
  return {{"kind", "remote"}, {"endpoint_url", *spec_.endpoint_url}, {"model", spec_.model_name}};
}

nlohmann::json RemoteBackend::request_body(const SampleRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  nlohmann::json body = {
      {"model", spec_.model_name},
      {"messages", std::move(messages)},
      {"temperature", request.params.temperature},
      {"top_p", request.params.top_p},
      {"top_k", request.params.top_k},
      {"max_tokens", request.params.max_tokens},
      {"n", request.params.n},
  };
  if (spec_.send_seed && request.params.seed) body["seed"] = *request.params.seed;
  return body;
}

std::vector<Completion> RemoteBackend::sample(const SampleRequest& request) {
  const std::string body = request_body(request).dump();
  httplib::Headers headers;
  if (const char* key = std::getenv(spec_.auth_env_var.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto secs = static_cast<time_t>(std::floor(spec_.timeout_s));
  const auto usecs = static_cast<time_t>((spec_.timeout_s - std::floor(spec_.timeout_s)) * 1e6);

  for (int attempt = 1;; ++attempt) {
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      impl_->in_flight.acquire();
      httplib::Client client(impl_->origin);
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      res = client.Post(impl_->path, headers, body, "application/json");
      impl_->in_flight.release();
    }

    if (!res) {
      std::string why = httplib::to_string(res.error());
      if (attempt > spec_.max_retries) {
        throw TransportError(fmt::format("{}: {} after {} attempts", *spec_.endpoint_url, why, attempt), attempt);
      }
      auto delay = std::chrono::duration<double>(spec_.backoff_s * std::pow(2.0, attempt - 1));
      spdlog::warn("{}: {}; retrying in {:.2f}s", *spec_.endpoint_url, why, delay.count());
      std::this_thread::sleep_for(delay);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError(fmt::format("{}: HTTP {}", *spec_.endpoint_url, res->status), attempt, res->status);
    }

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(fmt::format("{}: malformed response body: {}", *spec_.endpoint_url, e.what()), attempt,
                           res->status);
    }

    std::vector<Completion> out;
    if (reply.contains("choices") && reply["choices"].is_array()) {
      for (const auto& choice : reply["choices"]) {
        const auto* content = choice.contains("message") ? &choice["message"] : nullptr;
        if (content && content->contains("content") && (*content)["content"].is_string()) {
          out.push_back(Completion::success((*content)["content"].get<std::string>()));
        } else {
          out.push_back(Completion::failed("choice without message content"));
        }
      }
    }
    if (out.size() > static_cast<std::size_t>(request.params.n)) out.resize(static_cast<std::size_t>(request.params.n));
    while (out.size() < static_cast<std::size_t>(request.params.n)) {
      out.push_back(Completion::failed("endpoint returned fewer choices than requested"));
    }
    return out;
  }
}

}  // namespace cdg
