#include <catch_amalgamated.hpp>

#include <atomic>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "support/fixtures.hpp"
#include "valign/http_backend.hpp"

using namespace valign;

namespace {

struct Reply {
  int status = 200;
  std::string body;
  std::string retry_after;
};

// Local completions endpoint replaying a scripted sequence of replies; the
// last reply repeats once the script runs out.
class FakeServer {
 public:
  explicit FakeServer(std::vector<Reply> script) : script_(std::move(script)) {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      bodies_.push_back(req.body);
      auths_.push_back(req.get_header_value("Authorization"));
      const auto& r = script_[std::min(calls_++, script_.size() - 1)];
      res.status = r.status;
      if (!r.retry_after.empty()) res.set_header("Retry-After", r.retry_after);
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }
  std::size_t calls() {
    std::lock_guard lock(mu_);
    return calls_;
  }
  json body(std::size_t i) {
    std::lock_guard lock(mu_);
    return json::parse(bodies_.at(i));
  }
  std::string auth(std::size_t i) {
    std::lock_guard lock(mu_);
    return auths_.at(i);
  }

 private:
  httplib::Server server_;
  std::vector<Reply> script_;
  std::size_t calls_ = 0;
  std::vector<std::string> bodies_, auths_;
  std::mutex mu_;
  int port_ = 0;
  std::thread thread_;
};

std::string choices(std::initializer_list<std::string> texts) {
  json c = json::array();
  std::size_t i = 0;
  for (const auto& t : texts) c.push_back({{"index", i++}, {"text", t}});
  return json{{"model", "served-model"}, {"choices", c}}.dump();
}

struct Recorder {
  std::vector<std::chrono::milliseconds> sleeps;
  HttpBackend::Sleeper fn() {
    return [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
  }
};

HttpBackend make(const FakeServer& s, Recorder& rec, std::string key = "sk-test-secret-123") {
  HttpConfig cfg;
  cfg.url = s.url();
  cfg.model_name = "teacher";
  cfg.api_key = std::move(key);
  cfg.timeout = std::chrono::seconds(5);
  return HttpBackend(cfg, rec.fn());
}

}  // namespace

TEST_CASE("decoding parameters pass through to the payload") {
  FakeServer server({{200, choices({" a", " b", " c"})}});
  Recorder rec;
  auto backend = make(server, rec);
  GenRequest r{"Generate sexist content"};
  r.n_samples = 3;
  r.stop_sequences = {"\n"};
  const auto res = backend.complete(r, 4);
  CHECK(res.completions == std::vector<std::string>{" a", " b", " c"});
  CHECK(res.request_index == 4);
  CHECK(res.backend_id == "http");
  CHECK(res.model_name == "served-model");
  const auto body = server.body(0);
  CHECK(body.at("prompt") == "Generate sexist content");
  CHECK(body.at("top_p") == 0.7);
  CHECK(body.at("temperature") == 1.0);
  CHECK(body.at("max_tokens") == 256);
  CHECK(body.at("n") == 3);
  CHECK(body.at("model") == "teacher");
  CHECK(body.at("stop") == json::array({"\n"}));
  CHECK(server.auth(0) == "Bearer sk-test-secret-123");
  CHECK(rec.sleeps.empty());
}

TEST_CASE("choices are reordered by their index field") {
  FakeServer server({{200, R"({"choices":[{"index":1,"text":"second"},{"index":0,"text":"first"}]})"}});
  Recorder rec;
  GenRequest r{"p"};
  r.n_samples = 2;
  CHECK(make(server, rec).complete(r).completions == std::vector<std::string>{"first", "second"});
}

TEST_CASE("transient failures are retried with backoff") {
  FakeServer server({{503, "busy"}, {500, "oops"}, {200, choices({"ok"})}});
  Recorder rec;
  const auto res = make(server, rec).complete(GenRequest{"p"});
  CHECK(res.completions.front() == "ok");
  CHECK(server.calls() == 3);
  REQUIRE(rec.sleeps.size() == 2);
  CHECK(rec.sleeps[0] >= std::chrono::milliseconds(1000));
  CHECK(rec.sleeps[0] < std::chrono::milliseconds(1250));
  CHECK(rec.sleeps[1] >= std::chrono::milliseconds(2000));
  CHECK(rec.sleeps[1] < std::chrono::milliseconds(2500));
}

TEST_CASE("Retry-After is honoured") {
  FakeServer server({{429, "slow down", "3"}, {200, choices({"ok"})}});
  Recorder rec;
  make(server, rec).complete(GenRequest{"p"});
  REQUIRE(rec.sleeps.size() == 1);
  CHECK(rec.sleeps[0] == std::chrono::milliseconds(3000));
}

TEST_CASE("error kinds are distinguishable") {
  Recorder rec;
  auto kind_of = [&](std::vector<Reply> script, std::size_t n = 1) {
    FakeServer server(std::move(script));
    GenRequest r{"p"};
    r.n_samples = n;
    try {
      make(server, rec).complete(r);
    } catch (const BackendError& e) {
      return std::pair{e.kind(), server.calls()};
    }
    FAIL("expected BackendError");
    return std::pair{BackendErrorKind::request, std::size_t{0}};
  };
  CHECK(kind_of({{401, "bad key"}}) == std::pair{BackendErrorKind::auth, std::size_t{1}});
  CHECK(kind_of({{403, "forbidden"}}) == std::pair{BackendErrorKind::auth, std::size_t{1}});
  CHECK(kind_of({{400, "bad request"}}) == std::pair{BackendErrorKind::request, std::size_t{1}});
  CHECK(kind_of({{429, "limit"}}) == std::pair{BackendErrorKind::rate_limit, std::size_t{5}});
  CHECK(kind_of({{502, "gateway"}}) == std::pair{BackendErrorKind::network, std::size_t{5}});
  CHECK(kind_of({{200, "not json"}}).first == BackendErrorKind::malformed_response);
  CHECK(kind_of({{200, R"({"data": []})"}}).first == BackendErrorKind::malformed_response);
  CHECK(kind_of({{200, choices({"only one"})}}, 2).first == BackendErrorKind::malformed_response);
  CHECK(kind_of({{200, R"({"choices":[{"index":0}]})"}}).first == BackendErrorKind::malformed_response);
}

TEST_CASE("unreachable endpoint is a network error after bounded attempts") {
  const int port = fixtures::unused_port();
  HttpConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/completions";
  cfg.retry.max_attempts = 3;
  Recorder rec;
  HttpBackend backend(cfg, rec.fn());
  try {
    backend.complete(GenRequest{"p"});
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::network);
  }
  CHECK(rec.sleeps.size() == 2);
}

TEST_CASE("the credential never appears in errors or results") {
  const std::string key = "sk-very-secret-value";
  FakeServer server({{500, "echo: Bearer " + key}});
  Recorder rec;
  try {
    make(server, rec, key).complete(GenRequest{"p"});
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(key) == std::string::npos);
    CHECK(msg.find("***") != std::string::npos);
  }
  FakeServer ok({{200, choices({"fine"})}});
  const auto res = make(ok, rec, key).complete(GenRequest{"p"});
  CHECK(res.backend_id.find(key) == std::string::npos);
  CHECK(res.model_name.find(key) == std::string::npos);
}

TEST_CASE("key comes from the environment when not configured") {
  FakeServer server({{200, choices({"x"})}});
  ::setenv(kApiKeyEnv, "env-key-42", 1);
  Recorder rec;
  make(server, rec, "").complete(GenRequest{"p"});
  ::unsetenv(kApiKeyEnv);
  CHECK(server.auth(0) == "Bearer env-key-42");
}

TEST_CASE("url validation") {
  CHECK(parse_url("http://h:8/a/b").origin == "http://h:8");
  CHECK(parse_url("http://h:8/a/b").path == "/a/b");
  CHECK(parse_url("https://host").path == "/");
  CHECK_THROWS_AS(parse_url("ftp://x/y"), ConfigError);
  CHECK_THROWS_AS(parse_url("localhost:80/x"), ConfigError);
  CHECK_THROWS_AS(parse_url("http:///x"), ConfigError);
}

TEST_CASE("backoff doubles up to the cap") {
  RetryPolicy p;
  p.jitter = 0.0;
  Rng rng(1);
  CHECK(p.backoff(0, rng) == std::chrono::milliseconds(1000));
  CHECK(p.backoff(3, rng) == std::chrono::milliseconds(8000));
  CHECK(p.backoff(10, rng) == std::chrono::milliseconds(60000));
}
