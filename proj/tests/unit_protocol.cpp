#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "thermctl/bus.hpp"
#include "thermctl/plant.hpp"
#include "thermctl/summary.hpp"
#include "thermctl/supervisor.hpp"

using namespace thermctl;
using nlohmann::json;

namespace {

// Scripted chat-completions endpoint on a loopback port. Each test installs
// a handler that sees the raw request body and returns a canned reply.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  StubServer() {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   std::lock_guard<std::mutex> lock(mu_);
                   last_body_ = req.body;
                   if (handler_) handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  void respond_with(std::string body, int status = 200) {
    std::lock_guard<std::mutex> lock(mu_);
    handler_ = [body = std::move(body), status](const httplib::Request&,
                                                httplib::Response& res) {
      res.status = status;
      res.set_content(body, "application/json");
    };
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

  std::string last_body() {
    std::lock_guard<std::mutex> lock(mu_);
    return last_body_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::string last_body_;
  Handler handler_;
};

std::string tool_reply(const std::string& name, const json& args,
                       const std::string& content = "short justification") {
  json fn = {{"name", name}, {"arguments", args.dump()}};
  json doc = {{"choices",
               json::array({json{{"message",
                                  {{"content", content},
                                   {"tool_calls", json::array({json{{"id", "call_0"},
                                                                    {"type", "function"},
                                                                    {"function", fn}}})}}}}})}};
  return doc.dump();
}

WindowMetrics sample_window() {
  WindowMetrics m;
  m.window_id = 2;
  m.n_episodes = 4;
  m.avg_duration_steps = 80.0;
  m.avg_gradient = 0.02;
  m.avg_danger_pct = 0.7;
  m.current_alpha = 0.3;
  return m;
}

RemoteConfig remote_for(const StubServer& server) {
  RemoteConfig cfg;
  cfg.endpoint = server.endpoint();
  cfg.model = "stub-model";
  cfg.timeout_s = 5.0;
  return cfg;
}

}  // namespace

TEST_CASE("remote backend round-trips a well-formed tool call") {
  StubServer server;
  server.respond_with(tool_reply("decrease_exploration", json{{"alpha_value", 0.1}}));

  RemoteBackend backend(remote_for(server));
  SupervisorConfig scfg;
  ThermalConfig tcfg;
  auto d = backend.decide(sample_window(), scfg, tcfg);

  CHECK(d.parse_ok);
  CHECK_FALSE(d.timed_out);
  CHECK(d.source == "remote");
  CHECK(d.call.tool == ToolKind::DecreaseExploration);
  REQUIRE(d.call.alpha_value.has_value());
  CHECK(*d.call.alpha_value == doctest::Approx(0.1));
  CHECK(d.call.rationale == "short justification");
  CHECK(d.wall_latency_s >= 0.0);

  // The request on the wire is a complete chat-completions document.
  const json req = json::parse(server.last_body());
  CHECK(req.at("model") == "stub-model");
  CHECK(req.at("tool_choice") == "required");
  CHECK(req.at("messages").size() == 2);
  CHECK(req.at("tools").size() == 5);
  const std::string user = req["messages"][1].at("content");
  CHECK(user.find("Window #2: 4 scenarios") != std::string::npos);
  CHECK(user.find("Current α: 0.300") != std::string::npos);
}

TEST_CASE("responses without a tool call degrade to keep_alpha") {
  StubServer server;
  server.respond_with(R"({"choices": [{"message": {"content": "rambling, no tool"}}]})");

  RemoteBackend backend(remote_for(server));
  SupervisorConfig scfg;
  ThermalConfig tcfg;
  auto d = backend.decide(sample_window(), scfg, tcfg);

  CHECK_FALSE(d.parse_ok);
  CHECK_FALSE(d.timed_out);
  CHECK(d.call.tool == ToolKind::KeepAlpha);
  CHECK_FALSE(d.call.alpha_value.has_value());
  CHECK(d.call.rationale.rfind("fallback: ", 0) == 0);
}

TEST_CASE("unknown tools and out-of-range alphas degrade to keep_alpha") {
  StubServer server;
  RemoteBackend backend(remote_for(server));
  SupervisorConfig scfg;
  ThermalConfig tcfg;

  server.respond_with(tool_reply("overclock_everything", json::object()));
  auto d = backend.decide(sample_window(), scfg, tcfg);
  CHECK_FALSE(d.parse_ok);
  CHECK(d.call.tool == ToolKind::KeepAlpha);

  server.respond_with(tool_reply("increase_exploration", json{{"alpha_value", 7.0}}));
  d = backend.decide(sample_window(), scfg, tcfg);
  CHECK_FALSE(d.parse_ok);
  CHECK(d.call.tool == ToolKind::KeepAlpha);

  server.respond_with("garbage that is not json");
  d = backend.decide(sample_window(), scfg, tcfg);
  CHECK_FALSE(d.parse_ok);
  CHECK(d.call.tool == ToolKind::KeepAlpha);
}

TEST_CASE("http errors count as timeouts and never abort") {
  StubServer server;
  server.respond_with(R"({"error": "overloaded"})", 503);

  RemoteBackend backend(remote_for(server));
  SupervisorConfig scfg;
  ThermalConfig tcfg;
  auto d = backend.decide(sample_window(), scfg, tcfg);

  CHECK_FALSE(d.parse_ok);
  CHECK(d.timed_out);
  CHECK(d.call.tool == ToolKind::KeepAlpha);
  CHECK(d.call.rationale.find("http status 503") != std::string::npos);
}

TEST_CASE("unreachable endpoints degrade to keep_alpha with a timeout") {
  RemoteConfig cfg;
  // Reserved port with nothing listening; fail fast.
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.timeout_s = 0.2;

  RemoteBackend backend(cfg);
  SupervisorConfig scfg;
  ThermalConfig tcfg;
  auto d = backend.decide(sample_window(), scfg, tcfg);

  CHECK_FALSE(d.parse_ok);
  CHECK(d.timed_out);
  CHECK(d.call.tool == ToolKind::KeepAlpha);
  CHECK(d.call.rationale.rfind("fallback: no response", 0) == 0);
}

TEST_CASE("endpoints without a scheme are rejected up front") {
  RemoteConfig cfg;
  cfg.endpoint = "not-a-url";

  RemoteBackend backend(cfg);
  SupervisorConfig scfg;
  ThermalConfig tcfg;
  auto d = backend.decide(sample_window(), scfg, tcfg);

  CHECK_FALSE(d.parse_ok);
  CHECK_FALSE(d.timed_out);
  CHECK(d.call.tool == ToolKind::KeepAlpha);
  CHECK(d.call.rationale.find("unparsable endpoint") != std::string::npos);
}

TEST_CASE("supervisor charges the configured timeout when the backend is down") {
  SupervisorConfig scfg;
  scfg.window_duration_s = 100.0;
  scfg.backend = SupervisorBackendKind::Remote;
  scfg.remote.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  scfg.remote.timeout_s = 0.2;
  ThermalConfig tcfg;
  AgentBus bus(LatencyModel::fixed(30.0), 5);
  Supervisor sup(scfg, tcfg, bus, [] { return 0.3; }, make_backend(scfg));

  EpisodeSummary s;
  s.episode_id = 1;
  s.n_steps = 90;
  s.near_threshold_steps = 72;
  s.danger_pct = 0.8;
  s.sim_time_end_s = 50.0;
  bus.send_summary(s, 50.0);

  sup.tick(100.0);
  REQUIRE(sup.log().size() == 1);
  CHECK(sup.log()[0].source == "remote");
  CHECK_FALSE(sup.log()[0].parse_ok);
  CHECK(sup.log()[0].tool == "keep_alpha");
  // Timed-out decisions ride the bus with the remote timeout, not a fresh
  // latency draw.
  CHECK(sup.log()[0].latency_s == doctest::Approx(0.2));
  CHECK_FALSE(bus.poll_recommendation(100.1).has_value());
  auto rec = bus.poll_recommendation(100.2);
  REQUIRE(rec.has_value());
  CHECK(rec->alpha == doctest::Approx(0.3));
}

TEST_CASE("remote supervisor applies a served recommendation end to end") {
  StubServer server;
  server.respond_with(tool_reply("increase_exploration", json{{"alpha_value", 0.75}},
                                 "short episodes, explore more"));

  SupervisorConfig scfg;
  scfg.window_duration_s = 100.0;
  scfg.backend = SupervisorBackendKind::Remote;
  scfg.remote = remote_for(server);
  ThermalConfig tcfg;
  AgentBus bus(LatencyModel::fixed(12.0), 5);
  Supervisor sup(scfg, tcfg, bus, [] { return 0.2; }, make_backend(scfg));

  EpisodeSummary s;
  s.episode_id = 1;
  s.n_steps = 4;
  s.near_threshold_steps = 0;
  s.danger_pct = 0.0;
  s.sim_time_end_s = 60.0;
  bus.send_summary(s, 60.0);

  sup.tick(100.0);
  REQUIRE(sup.log().size() == 1);
  CHECK(sup.log()[0].parse_ok);
  CHECK(sup.log()[0].tool == "increase_exploration");
  CHECK(sup.log()[0].alpha == doctest::Approx(0.75));
  CHECK(sup.log()[0].latency_s == doctest::Approx(12.0));

  auto rec = bus.poll_recommendation(112.0);
  REQUIRE(rec.has_value());
  CHECK(rec->alpha == doctest::Approx(0.75));
  CHECK(rec->rationale == "short episodes, explore more");
}
