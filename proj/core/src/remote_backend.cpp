#include <chrono>
#include <cmath>
#include <string>

#include <httplib.h>

#include "thermctl/supervisor.hpp"

namespace thermctl {
namespace {

struct EndpointParts {
  std::string base;  ///< scheme://host:port
  std::string path;
  bool ok = false;
};

EndpointParts split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return {};
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions", true};
  return {url.substr(0, path_start), url.substr(path_start), true};
}

ToolCall fallback(std::string why) {
  return {ToolKind::KeepAlpha, std::nullopt, "fallback: " + std::move(why)};
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

SupervisorBackend::Decision RemoteBackend::decide(const WindowMetrics& m,
                                                  const SupervisorConfig& scfg,
                                                  const ThermalConfig& tcfg) {
  Decision d;
  d.source = "remote";

  const EndpointParts ep = split_endpoint(cfg_.endpoint);
  if (!ep.ok) {
    d.call = fallback("unparsable endpoint " + cfg_.endpoint);
    d.parse_ok = false;
    return d;
  }

  // The request reflects this backend's remote config even when the caller's
  // supervisor config carries a different one.
  SupervisorConfig req_cfg = scfg;
  req_cfg.remote = cfg_;
  const std::string body = build_chat_request(build_prompts(m, req_cfg, tcfg), req_cfg);

  httplib::Client client(ep.base);
  const auto timeout =
      std::chrono::milliseconds(static_cast<long>(std::lround(cfg_.timeout_s * 1000.0)));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const auto t0 = std::chrono::steady_clock::now();
  const httplib::Result res = client.Post(ep.path, body, "application/json");
  d.wall_latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!res) {
    // Transport failure and timeout share the fallback path; the supervisor
    // charges the configured timeout as the simulated latency.
    d.call = fallback("no response from " + cfg_.endpoint + " (" + to_string(res.error()) + ")");
    d.parse_ok = false;
    d.timed_out = true;
    return d;
  }
  if (res->status != 200) {
    d.call = fallback("http status " + std::to_string(res->status));
    d.parse_ok = false;
    d.timed_out = true;
    return d;
  }

  const ParsedTool parsed = parse_tool_call(res->body, scfg);
  d.call = parsed.call;
  d.parse_ok = parsed.ok;
  return d;
}

}  // namespace thermctl
