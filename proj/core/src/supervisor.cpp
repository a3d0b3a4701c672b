#include "thermctl/supervisor.hpp"

#include <algorithm>
#include <cstdio>
#include <utility>

#include <json.hpp>

#include "thermctl/csv.hpp"
#include "thermctl/errors.hpp"

namespace thermctl {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string pct(double fraction) { return format_double(fraction * 100.0); }

}  // namespace

void SupervisorConfig::validate() const {
  if (!(window_duration_s > 0.0)) throw ConfigError("window_duration_s must be positive");
  if (!(alpha_default > 0.0)) throw ConfigError("alpha_default must be positive");
  const bool ordered = 0.0 < decrease_range.lo && decrease_range.lo < decrease_range.hi &&
                       decrease_range.hi <= moderate_range.lo &&
                       moderate_range.lo < moderate_range.hi &&
                       moderate_range.hi <= increase_range.lo &&
                       increase_range.lo < increase_range.hi;
  if (!ordered) throw ConfigError("alpha ranges must be ordered decrease <= moderate <= increase");
  if (!(duration_low_steps < duration_high_steps))
    throw ConfigError("duration bounds must satisfy low < high");
  if (!(0.0 <= danger_low && danger_low < danger_high && danger_high <= 1.0))
    throw ConfigError("danger bounds must satisfy 0 <= low < high <= 1");
  if (!(gradient_high > 0.0)) throw ConfigError("gradient_high must be positive");
  if (!(remote.timeout_s > 0.0)) throw ConfigError("remote timeout_s must be positive");
  if (backend == SupervisorBackendKind::Remote && remote.endpoint.empty())
    throw ConfigError("remote backend needs an endpoint");
}

std::string to_string(UtilizationClass c) {
  switch (c) {
    case UtilizationClass::Low:
      return "low";
    case UtilizationClass::Medium:
      return "medium";
    case UtilizationClass::High:
      return "high";
    case UtilizationClass::Mixed:
      return "mixed";
  }
  return "?";
}

std::string to_string(ToolKind t) {
  switch (t) {
    case ToolKind::IncreaseExploration:
      return "increase_exploration";
    case ToolKind::ModerateExploration:
      return "moderate_exploration";
    case ToolKind::DecreaseExploration:
      return "decrease_exploration";
    case ToolKind::KeepAlpha:
      return "keep_alpha";
    case ToolKind::ResetAlpha:
      return "reset_alpha";
  }
  return "?";
}

std::optional<ToolKind> tool_from_name(const std::string& name) {
  if (name == "increase_exploration") return ToolKind::IncreaseExploration;
  if (name == "moderate_exploration") return ToolKind::ModerateExploration;
  if (name == "decrease_exploration") return ToolKind::DecreaseExploration;
  if (name == "keep_alpha") return ToolKind::KeepAlpha;
  if (name == "reset_alpha") return ToolKind::ResetAlpha;
  return std::nullopt;
}

UtilizationClass classify_utilization(const WindowMetrics& m, const SupervisorConfig& cfg) {
  if (m.n_episodes < 1 || !m.avg_duration_steps || !m.avg_danger_pct)
    throw EmptyWindowError("window " + std::to_string(m.window_id) +
                           " has no episodes to classify");
  const double dur = *m.avg_duration_steps;
  const double danger = *m.avg_danger_pct;
  const UtilizationClass by_dur = dur < cfg.duration_low_steps    ? UtilizationClass::Low
                                  : dur > cfg.duration_high_steps ? UtilizationClass::High
                                                                  : UtilizationClass::Medium;
  const UtilizationClass by_danger = danger < cfg.danger_low    ? UtilizationClass::Low
                                     : danger > cfg.danger_high ? UtilizationClass::High
                                                                : UtilizationClass::Medium;
  return by_dur == by_danger ? by_dur : UtilizationClass::Mixed;
}

ToolCall recommend_alpha(const WindowMetrics& m, double current_alpha,
                         const SupervisorConfig& cfg) {
  const UtilizationClass cls = classify_utilization(m, cfg);
  ToolCall call;
  switch (cls) {
    case UtilizationClass::Low:
      call.tool = ToolKind::IncreaseExploration;
      call.alpha_value = cfg.increase_range.midpoint();
      call.rationale = "low utilization: explore for higher CPU strategies";
      break;
    case UtilizationClass::Medium:
      call.tool = ToolKind::ModerateExploration;
      call.alpha_value = cfg.moderate_range.midpoint();
      call.rationale = "medium utilization: balanced exploration";
      break;
    case UtilizationClass::High:
      call.tool = ToolKind::DecreaseExploration;
      call.alpha_value = cfg.decrease_range.midpoint();
      call.rationale = "high utilization: exploit proven policies";
      break;
    case UtilizationClass::Mixed:
      call.tool = ToolKind::KeepAlpha;
      if (cfg.mixed_adjust && current_alpha != cfg.alpha_default) {
        const double step = current_alpha > cfg.alpha_default ? -0.05 : 0.05;
        call.alpha_value = std::clamp(current_alpha + step, cfg.decrease_range.lo,
                                      cfg.increase_range.hi);
        call.rationale = "mixed signals: nudge alpha toward default";
      } else {
        call.rationale = "mixed signals: keep alpha at " + fmt("%.3f", current_alpha);
      }
      break;
  }
  if (m.avg_gradient && *m.avg_gradient > cfg.gradient_high)
    call.rationale += "; gradient " + fmt("%.4f", *m.avg_gradient) + " above " +
                      format_double(cfg.gradient_high) + " degC/step";
  return call;
}

PromptBundle build_prompts(const WindowMetrics& m, const SupervisorConfig& scfg,
                           const ThermalConfig& tcfg) {
  const std::string thr = format_double(tcfg.threshold_c);
  const std::string floor = format_double(tcfg.danger_floor_c);
  const std::string dlo = format_double(scfg.duration_low_steps);
  const std::string dhi = format_double(scfg.duration_high_steps);
  const std::string zlo = pct(scfg.danger_low);
  const std::string zhi = pct(scfg.danger_high);
  const auto range = [](const AlphaRange& r) {
    return format_double(r.lo) + "-" + format_double(r.hi);
  };

  PromptBundle out;
  out.system_text =
      "You optimize SAC entropy coefficient (α) to maximize CPU usage and episode "
      "duration for thermal control. It's optimal to keep temperature just below the "
      "threshold.\n"
      "THERMAL LIMIT: " + thr + "°C (critical threshold)\n"
      "\n"
      "UTILIZATION PATTERNS:\n"
      "- Low utilization (under-utilization): Short scenarios (<" + dlo + " steps) or low % "
      "in danger zone (<" + zlo + "%): indicates low CPU push or violations too quick.\n"
      "- Medium utilization: Medium scenarios (" + dlo + "-" + dhi + " steps) or medium % in "
      "danger zone (" + zlo + "-" + zhi + "%)\n"
      "- High utilization (optimal utilization): Long scenarios (>" + dhi + " steps) or high "
      "% in danger zone (>" + zhi + "%): good hugging near limit without violations.\n"
      "Additional context: Avg thermal gradient informs heating rate (high >" +
      format_double(scfg.gradient_high) +
      " = fast change, use for decision nuance but not primary classification).\n"
      "\n"
      "α STRATEGY:\n"
      "- Low utilization -> INCREASE α (" + range(scfg.increase_range) + "): More "
      "exploration to find higher CPU strategies without violations.\n"
      "- Medium utilization -> MODERATE α (" + range(scfg.moderate_range) + "): Balanced "
      "approach.\n"
      "- High utilization -> DECREASE α (" + range(scfg.decrease_range) + "): Exploit "
      "proven high-utilization policies.\n"
      "- Mixed/uncertain -> Keep current or slightly adjust (±0.05).\n"
      "\n"
      "Consider the average percentage of steps in the danger zone (≥" + floor +
      "°C) when assessing risk. A high percentage (without violations) indicates optimal "
      "max CPU near the limit; treat as high utilization if episodes long. Low percentage "
      "suggests under-utilization.\n"
      "\n"
      "Briefly justify α choice in 1 line, then call a tool. Tool use is mandatory.\n";

  const double dur = m.avg_duration_steps.value_or(0.0);
  const double grad = m.avg_gradient.value_or(0.0);
  const double danger = m.avg_danger_pct.value_or(0.0);
  out.user_text =
      "Window #" + std::to_string(m.window_id) + ": " + std::to_string(m.n_episodes) +
      " scenarios\n"
      "\n"
      "METRICS:\n"
      "- Avg duration: " + fmt("%.1f", dur) + " steps\n"
      "- Avg gradient: " + fmt("%.4f", grad) + "\n"
      "- Avg % in danger zone: " + fmt("%.1f", danger * 100.0) + "%\n"
      "\n"
      "Current α: " + fmt("%.3f", m.current_alpha) + "\n"
      "\n"
      "Optimize for maximum CPU usage and episode duration, tolerating temperatures near "
      "the threshold. Adjust α?\n";
  return out;
}

std::string build_chat_request(const PromptBundle& prompts, const SupervisorConfig& scfg) {
  using nlohmann::json;
  const auto range_tool = [](const std::string& name, const std::string& desc,
                             const AlphaRange& r) {
    return json{
        {"type", "function"},
        {"function",
         {{"name", name},
          {"description", desc},
          {"parameters",
           {{"type", "object"},
            {"properties",
             {{"alpha_value",
               {{"type", "number"},
                {"description", "entropy coefficient in [" + format_double(r.lo) + ", " +
                                    format_double(r.hi) + "]"}}}}},
            {"required", json::array({"alpha_value"})}}}}}};
  };
  const auto plain_tool = [](const std::string& name, const std::string& desc) {
    return json{{"type", "function"},
                {"function",
                 {{"name", name},
                  {"description", desc},
                  {"parameters", {{"type", "object"}, {"properties", json::object()}}}}}};
  };

  json tools = json::array();
  tools.push_back(range_tool("increase_exploration",
                             "Increase exploration with alpha in the upper range.",
                             scfg.increase_range));
  tools.push_back(range_tool("moderate_exploration",
                             "Set exploration to a moderate range.", scfg.moderate_range));
  tools.push_back(range_tool("decrease_exploration",
                             "Decrease exploration and exploit proven efficient policies.",
                             scfg.decrease_range));
  tools.push_back(plain_tool("keep_alpha", "Keep the current value of alpha."));
  tools.push_back(plain_tool("reset_alpha", "Set alpha back to the default value " +
                                                format_double(scfg.alpha_default) + "."));

  const json req = {
      {"model", scfg.remote.model},
      {"messages", json::array({json{{"role", "system"}, {"content", prompts.system_text}},
                                json{{"role", "user"}, {"content", prompts.user_text}}})},
      {"tools", tools},
      {"tool_choice", "required"},
  };
  return req.dump();
}

namespace {

ParsedTool parse_failure(std::string why) {
  ParsedTool p;
  p.ok = false;
  p.error = std::move(why);
  p.call = ToolCall{ToolKind::KeepAlpha, std::nullopt, "fallback: " + p.error};
  return p;
}

}  // namespace

ParsedTool parse_tool_call(const std::string& response_body, const SupervisorConfig& cfg) {
  using nlohmann::json;
  try {
    const json doc = json::parse(response_body);
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
      return parse_failure("response has no choices");
    const json& choice = doc["choices"][0];
    if (!choice.contains("message")) return parse_failure("choice has no message");
    const json& message = choice["message"];
    if (!message.contains("tool_calls") || !message["tool_calls"].is_array() ||
        message["tool_calls"].empty())
      return parse_failure("no tool call in response");
    const json& fn = message["tool_calls"][0].at("function");
    const std::string name = fn.at("name").get<std::string>();
    const std::optional<ToolKind> kind = tool_from_name(name);
    if (!kind) return parse_failure("unknown tool: " + name);

    // Arguments arrive either as a JSON-encoded string (the usual wire form)
    // or as an inline object.
    json args = json::object();
    if (fn.contains("arguments")) {
      const json& a = fn["arguments"];
      if (a.is_string()) {
        const auto s = a.get<std::string>();
        if (!s.empty()) args = json::parse(s);
      } else if (a.is_object()) {
        args = a;
      }
    }

    ParsedTool out;
    out.call.tool = *kind;
    if (message.contains("content") && message["content"].is_string())
      out.call.rationale = message["content"].get<std::string>();

    switch (*kind) {
      case ToolKind::IncreaseExploration:
      case ToolKind::ModerateExploration:
      case ToolKind::DecreaseExploration: {
        if (!args.contains("alpha_value") || !args["alpha_value"].is_number())
          return parse_failure("tool " + name + " is missing alpha_value");
        const double v = args["alpha_value"].get<double>();
        const AlphaRange& range = *kind == ToolKind::IncreaseExploration ? cfg.increase_range
                                  : *kind == ToolKind::ModerateExploration
                                      ? cfg.moderate_range
                                      : cfg.decrease_range;
        if (!range.contains(v))
          return parse_failure("alpha_value " + format_double(v) + " outside [" +
                               format_double(range.lo) + ", " + format_double(range.hi) +
                               "] for " + name);
        out.call.alpha_value = v;
        break;
      }
      case ToolKind::KeepAlpha:
        break;
      case ToolKind::ResetAlpha:
        out.call.alpha_value = cfg.alpha_default;
        break;
    }
    out.ok = true;
    return out;
  } catch (const std::exception& e) {
    return parse_failure(std::string("malformed response: ") + e.what());
  }
}

SupervisorBackend::Decision RulesBackend::decide(const WindowMetrics& m,
                                                 const SupervisorConfig& scfg,
                                                 const ThermalConfig&) {
  Decision d;
  d.call = recommend_alpha(m, m.current_alpha, scfg);
  d.parse_ok = true;
  d.timed_out = false;
  d.source = "rules";
  return d;
}

std::unique_ptr<SupervisorBackend> make_backend(const SupervisorConfig& cfg) {
  if (cfg.backend == SupervisorBackendKind::Remote)
    return std::make_unique<RemoteBackend>(cfg.remote);
  return std::make_unique<RulesBackend>();
}

Supervisor::Supervisor(SupervisorConfig scfg, ThermalConfig tcfg, AgentBus& bus,
                       std::function<double()> alpha_provider,
                       std::unique_ptr<SupervisorBackend> backend)
    : scfg_(std::move(scfg)),
      tcfg_(tcfg),
      bus_(bus),
      alpha_provider_(std::move(alpha_provider)),
      backend_(std::move(backend)),
      next_boundary_(scfg_.window_duration_s) {
  scfg_.validate();
  if (!alpha_provider_) throw ConfigError("supervisor needs an alpha provider");
  if (!backend_) backend_ = make_backend(scfg_);
}

void Supervisor::tick(double now) {
  while (auto s = bus_.poll_summary(now)) buffer_.push_back(std::move(*s));
  while (now >= next_boundary_) {
    close_window(next_boundary_);
    next_boundary_ += scfg_.window_duration_s;
  }
}

double Supervisor::resolve_alpha(const ToolCall& call, double current_alpha) const {
  switch (call.tool) {
    case ToolKind::IncreaseExploration:
    case ToolKind::ModerateExploration:
    case ToolKind::DecreaseExploration:
      return call.alpha_value.value_or(current_alpha);
    case ToolKind::KeepAlpha:
      return call.alpha_value.value_or(current_alpha);
    case ToolKind::ResetAlpha:
      return scfg_.alpha_default;
  }
  return current_alpha;
}

void Supervisor::close_window(double boundary) {
  const std::int64_t id = ++window_id_;
  if (buffer_.empty()) return;

  const double current_alpha = alpha_provider_();
  const WindowMetrics metrics = aggregate_window(buffer_, current_alpha, id);
  buffer_.clear();

  const SupervisorBackend::Decision decision = backend_->decide(metrics, scfg_, tcfg_);
  const double alpha = resolve_alpha(decision.call, current_alpha);

  AlphaRecommendation rec;
  rec.window_id = id;
  rec.alpha = alpha;
  rec.pin_alpha =
      decision.call.tool != ToolKind::KeepAlpha || decision.call.alpha_value.has_value();
  rec.tool = to_string(decision.call.tool);
  rec.source = decision.source;
  rec.rationale = decision.call.rationale;

  const double latency =
      decision.timed_out
          ? bus_.send_recommendation_with_latency(std::move(rec), boundary,
                                                  scfg_.remote.timeout_s)
          : bus_.send_recommendation(std::move(rec), boundary);
  log_.push_back({id, boundary, latency, to_string(decision.call.tool), alpha,
                  decision.source, decision.parse_ok});
}

void run_supervisor_loop(Supervisor& sup,
                         const std::function<std::optional<double>()>& next_time) {
  while (auto t = next_time()) sup.tick(*t);
}

void write_recommendations(const std::string& path,
                           const std::vector<RecommendationLogRow>& rows) {
  CsvWriter csv(path, {"window_id", "issued_at", "latency_s", "tool", "alpha", "source",
                       "parse_ok"});
  for (const RecommendationLogRow& r : rows) {
    csv.row({std::to_string(r.window_id), format_double(r.issued_at),
             format_double(r.latency_s), r.tool, format_double(r.alpha), r.source,
             r.parse_ok ? "1" : "0"});
  }
  csv.flush();
}

}  // namespace thermctl
