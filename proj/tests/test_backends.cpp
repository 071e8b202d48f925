#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "doctest.h"

#include "cdg/backends.hpp"
#include "cdg/digest.hpp"
#include "cdg/errors.hpp"
#include "support/scripted.hpp"

using namespace cdg;
using nlohmann::json;

namespace {

// Chat-completions stand-in on a loopback port.
class FakeEndpoint {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit FakeEndpoint(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      int now = ++in_flight;
      int seen = max_in_flight.load();
      while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
      }
      handler_(req, res);
      --in_flight;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  std::atomic<int> hits{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json reply_with(std::vector<std::string> texts) {
  json choices = json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", texts[i]}}}});
  }
  return {{"id", "x"}, {"object", "chat.completion"}, {"choices", choices}};
}

BackendSpec remote_spec(std::string url) {
  BackendSpec s;
  s.kind = BackendKind::remote;
  s.endpoint_url = std::move(url);
  s.model_name = "prover-8b";
  s.timeout_s = 5.0;
  s.max_retries = 2;
  s.backoff_s = 0.01;
  s.auth_env_var = "CDG_TEST_KEY";
  return s;
}

SampleRequest request(int n = 1) {
  SampleRequest r;
  r.messages = {{ChatRole::user, "What is 2+2?"}, {ChatRole::assistant, "5"}, {ChatRole::user, "check"}};
  r.params.n = n;
  r.params.seed = 42;
  r.question_id = "q";
  return r;
}

}  // namespace

TEST_CASE("remote request follows the chat-completions wire format") {
  json captured;
  std::string auth;
  FakeEndpoint server([&](const httplib::Request& req, httplib::Response& res) {
    captured = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(reply_with({"a", "b"}).dump(), "application/json");
  });
  setenv("CDG_TEST_KEY", "sekrit", 1);
  RemoteBackend backend(remote_spec(server.url()));
  auto out = backend.sample(request(2));
  unsetenv("CDG_TEST_KEY");

  REQUIRE(out.size() == 2);
  CHECK(*out[0].text == "a");
  CHECK(*out[1].text == "b");
  CHECK(auth == "Bearer sekrit");
  CHECK(captured["model"] == "prover-8b");
  CHECK(captured["messages"] == json::array({{{"role", "user"}, {"content", "What is 2+2?"}},
                                             {{"role", "assistant"}, {"content", "5"}},
                                             {{"role", "user"}, {"content", "check"}}}));
  CHECK(captured["temperature"] == 0.95);
  CHECK(captured["top_p"] == 0.95);
  CHECK(captured["top_k"] == 5);
  CHECK(captured["max_tokens"] == 4096);
  CHECK(captured["n"] == 2);
  CHECK(captured["seed"] == 42);
}

TEST_CASE("seed is omitted when disabled") {
  auto spec = remote_spec("http://127.0.0.1:9/v1/chat/completions");
  spec.send_seed = false;
  RemoteBackend backend(spec);
  CHECK_FALSE(backend.request_body(request()).contains("seed"));
  CHECK(backend.identity()["model"] == "prover-8b");
}

TEST_CASE("short replies are padded with failure markers") {
  FakeEndpoint server([](const httplib::Request&, httplib::Response& res) {
    json r = reply_with({"only"});
    r["choices"].push_back({{"index", 1}, {"message", {{"role", "assistant"}, {"content", nullptr}}}});
    res.set_content(r.dump(), "application/json");
  });
  RemoteBackend backend(remote_spec(server.url()));
  auto out = backend.sample(request(3));
  REQUIRE(out.size() == 3);
  CHECK(out[0].ok());
  CHECK_FALSE(out[1].ok());
  CHECK_FALSE(out[2].ok());
}

TEST_CASE("non-2xx status fails without retry") {
  FakeEndpoint server([](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("busy", "text/plain");
  });
  RemoteBackend backend(remote_spec(server.url()));
  try {
    backend.sample(request());
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.http_status() == 503);
    CHECK(e.attempts() == 1);
  }
  CHECK(server.hits == 1);
}

TEST_CASE("malformed body is a transport error") {
  FakeEndpoint server([](const httplib::Request&, httplib::Response& res) { res.set_content("{oops", "application/json"); });
  RemoteBackend backend(remote_spec(server.url()));
  CHECK_THROWS_AS(backend.sample(request()), TransportError);
}

TEST_CASE("connection failures are retried then surfaced") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  RemoteBackend backend(remote_spec("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"));
  try {
    backend.sample(request());
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);
    CHECK(e.http_status() == 0);
  }
}

TEST_CASE("in-flight cap bounds concurrent requests") {
  FakeEndpoint server([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    res.set_content(reply_with({"ok"}).dump(), "application/json");
  });
  auto spec = remote_spec(server.url());
  spec.max_in_flight = 2;
  RemoteBackend backend(spec);
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] {
      if (backend.sample(request()).front().ok()) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 6);
  CHECK(server.max_in_flight <= 2);
  CHECK(server.max_in_flight >= 1);
}

TEST_CASE("backend spec validation") {
  BackendSpec s;
  s.kind = BackendKind::remote;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.kind = BackendKind::scripted;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.script = json{{"rules", json::object()}};
  CHECK_NOTHROW(s.validate());
  CHECK_THROWS_AS(RemoteBackend(remote_spec("ftp://nowhere")), ConfigError);
}

TEST_CASE("scripted agent is deterministic in seed and index") {
  auto qs = testing::toy_questions(3);
  auto agent = testing::scripted(testing::prover_script(0.5, 1.0, 0.0), qs);
  SampleRequest r;
  r.messages = render_question_prompt(qs[0]);
  r.question_id = qs[0].id;
  r.params.n = 64;
  r.params.seed = 7;
  auto a = agent->sample(r);
  r.params.temperature = 0.0;
  auto b = agent->sample(r);
  REQUIRE(a.size() == 64);
  int correct = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(*a[i].text == *b[i].text);
    correct += is_correct(*a[i].text, qs[0].truth);
  }
  CHECK(correct > 16);
  CHECK(correct < 48);
  r.params.seed = 8;
  auto c = agent->sample(r);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= *a[i].text != *c[i].text;
  CHECK(differs);
}

TEST_CASE("scripted entries and gaps") {
  auto qs = testing::toy_questions(1);
  json script = {{"entries", {{{"question_id", qs[0].id}, {"turn", "initial"}, {"texts", {"x \\boxed{1}", "y"}}}}}};
  auto agent = testing::scripted(script, qs);
  SampleRequest r;
  r.messages = render_question_prompt(qs[0]);
  r.question_id = qs[0].id;
  r.params.n = 3;
  auto out = agent->sample(r);
  CHECK(*out[0].text == "x \\boxed{1}");
  CHECK(*out[1].text == "y");
  CHECK(*out[2].text == "x \\boxed{1}");
  r.turn = Turn::critique;
  CHECK_THROWS_AS(agent->sample(r), ScriptedGapError);
  r.question_id = "unknown";
  r.turn = Turn::initial;
  CHECK_THROWS_AS(testing::scripted(testing::prover_script(1, 1, 0), qs)->sample(r), ScriptedGapError);
}

TEST_CASE("scripted reviser reacts to critic tags") {
  auto qs = testing::toy_questions(1);
  json script = testing::prover_script(1.0, 0.0, 0.0);
  script["rules"]["revise"]["p_resist_by_critic"] = {{"weak", 1.0}};
  auto prover = testing::scripted(script, qs);
  Attempt initial = grade_attempt(scripted::correct_solution(qs[0].ground_truth), qs[0].truth);
  auto revise_with = [&](std::string tag) {
    Critique c;
    c.text = scripted::critique_text(tag, "misleading", 0);
    SampleRequest r{render_revise_prompt(qs[0], initial, c), {}, qs[0].id, AgentRole::prover, Turn::revise};
    r.params.n = 8;
    r.params.seed = 1;
    int resisted = 0;
    for (auto& c2 : prover->sample(r)) resisted += detect_resist_marker(*c2.text);
    return resisted;
  };
  CHECK(revise_with("weak") == 8);
  CHECK(revise_with("strong") == 0);
}

TEST_CASE("sample_completions pads and trims") {
  struct Short : Backend {
    std::vector<Completion> sample(const SampleRequest&) override { return {Completion::success("a")}; }
    json identity() const override { return {}; }
  } b;
  auto r = request(3);
  auto out = sample_completions(b, r);
  CHECK(out.size() == 3);
  CHECK_FALSE(out[2].ok());
  r.params.n = 0;
  CHECK_THROWS_AS(sample_completions(b, r), ContractError);
}

TEST_CASE("seed derivation") {
  CHECK(derive_seed(1, "q", "initial", 1) == derive_seed(1, "q", "initial", 1));
  CHECK(derive_seed(1, "q", "initial", 1) != derive_seed(2, "q", "initial", 1));
  CHECK(derive_seed(1, "q", "initial", 1) != derive_seed(1, "q", "critique", 1));
  CHECK(derive_seed(1, "q", "revise", 1, 2) != derive_seed(1, "q", "revise", 2, 1));
  double lo = 1, hi = 0;
  for (int i = 0; i < 1000; ++i) {
    double u = unit_uniform(3, static_cast<std::uint64_t>(i));
    lo = std::min(lo, u), hi = std::max(hi, u);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
}
