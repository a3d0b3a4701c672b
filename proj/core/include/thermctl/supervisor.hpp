#pragma once

// Supervising agent: aggregates each window of episode summaries and picks
// an entropy-coefficient adjustment through a five-tool interface, either
// via a deterministic rule engine or via a remote tool-calling chat model.
//
// Rule table (duration in steps, danger share of steps near the limit):
//
//   duration  < low     -> Low      danger < low      -> Low
//   duration in [lo,hi] -> Medium   danger in [lo,hi] -> Medium
//   duration  > high    -> High     danger > high     -> High
//
// Equal sub-classes give that class, disagreement gives Mixed. Low class
// raises alpha (more exploration), High lowers it (exploit), Medium lands in
// between, Mixed keeps the current value.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "thermctl/bus.hpp"
#include "thermctl/plant.hpp"
#include "thermctl/summary.hpp"

namespace thermctl {

enum class SupervisorBackendKind { Rules, Remote };
enum class UtilizationClass { Low, Medium, High, Mixed };
enum class ToolKind {
  IncreaseExploration,
  ModerateExploration,
  DecreaseExploration,
  KeepAlpha,
  ResetAlpha,
};

std::string to_string(UtilizationClass c);
std::string to_string(ToolKind t);  ///< wire name, e.g. "increase_exploration"
std::optional<ToolKind> tool_from_name(const std::string& name);

struct AlphaRange {
  double lo = 0.0, hi = 0.0;
  /// Snapped to 1e-9 so midpoints of decimal config literals stay exact in
  /// logs (0.4..0.8 yields 0.6, not 0.6000000000000001).
  double midpoint() const { return std::nearbyint(0.5 * (lo + hi) * 1e9) / 1e9; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct RemoteConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "local-model";
  double timeout_s = 30.0;
};

struct SupervisorConfig {
  double window_duration_s = 3600.0;  ///< 900 for the orbital cadence
  SupervisorBackendKind backend = SupervisorBackendKind::Rules;
  double alpha_default = 0.2;
  AlphaRange increase_range{0.4, 0.8};
  AlphaRange moderate_range{0.2, 0.4};
  AlphaRange decrease_range{0.05, 0.2};
  double duration_low_steps = 10.0;   ///< below: short episodes
  double duration_high_steps = 60.0;  ///< above: long episodes
  double danger_low = 0.20;           ///< fractions of steps in the danger zone
  double danger_high = 0.60;
  double gradient_high = 0.1;  ///< degC/step; nuance only, never changes the class
  bool mixed_adjust = false;   ///< Mixed nudges alpha 0.05 toward the default instead of keeping
  RemoteConfig remote;

  void validate() const;  ///< ConfigError on unordered ranges or bounds
};

struct ToolCall {
  ToolKind tool = ToolKind::KeepAlpha;
  std::optional<double> alpha_value;  ///< absent for keep_alpha
  std::string rationale;
};

/// Duration and danger classified independently against the bounds
/// (boundaries inclusive into Medium); equal -> that class, else Mixed.
/// EmptyWindowError when the window saw no episodes.
UtilizationClass classify_utilization(const WindowMetrics& m, const SupervisorConfig& cfg);

/// Deterministic rule engine: Low -> increase (range midpoint), Medium ->
/// moderate, High -> decrease, Mixed -> keep. Pure function of its inputs;
/// a steep gradient is noted in the rationale only.
ToolCall recommend_alpha(const WindowMetrics& m, double current_alpha,
                         const SupervisorConfig& cfg);

struct PromptBundle {
  std::string system_text;
  std::string user_text;
};

/// Deterministic rendering; threshold and danger-zone temperatures come from
/// the thermal config, bounds and ranges from the supervisor config, alpha
/// formatted to 3 decimals.
PromptBundle build_prompts(const WindowMetrics& m, const SupervisorConfig& scfg,
                           const ThermalConfig& tcfg);

/// Chat-completions request body: system+user messages plus the five-tool
/// function schema.
std::string build_chat_request(const PromptBundle& prompts, const SupervisorConfig& scfg);

struct ParsedTool {
  ToolCall call;       ///< keep_alpha fallback when ok is false
  bool ok = false;
  std::string error;   ///< empty when ok
};

/// Extracts the first tool invocation from a chat-completion response.
/// No tool call, an unknown tool, an out-of-range alpha or a malformed
/// document all degrade to a keep_alpha fallback; nothing throws.
ParsedTool parse_tool_call(const std::string& response_body, const SupervisorConfig& cfg);

class SupervisorBackend {
 public:
  virtual ~SupervisorBackend() = default;

  struct Decision {
    ToolCall call;
    bool parse_ok = true;
    bool timed_out = false;
    double wall_latency_s = 0.0;  ///< real round-trip; visibility uses simulated latency
    std::string source;           ///< rules | remote
  };

  virtual Decision decide(const WindowMetrics& m, const SupervisorConfig& scfg,
                          const ThermalConfig& tcfg) = 0;
};

class RulesBackend final : public SupervisorBackend {
 public:
  Decision decide(const WindowMetrics& m, const SupervisorConfig& scfg,
                  const ThermalConfig& tcfg) override;
};

/// Talks to an OpenAI-style chat-completions endpoint. Unreachable or slow
/// backends degrade to keep_alpha; the control loop never stalls on them.
class RemoteBackend final : public SupervisorBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  Decision decide(const WindowMetrics& m, const SupervisorConfig& scfg,
                  const ThermalConfig& tcfg) override;

 private:
  RemoteConfig cfg_;
};

std::unique_ptr<SupervisorBackend> make_backend(const SupervisorConfig& cfg);

/// One row of recommendations.csv.
struct RecommendationLogRow {
  std::int64_t window_id = 0;
  double issued_at = 0.0;
  double latency_s = 0.0;
  std::string tool;
  double alpha = 0.0;
  std::string source;
  bool parse_ok = true;
};

/// Windowed supervision driven by the simulated clock. tick() drains the
/// summary queue, and for every window boundary that now has passed,
/// aggregates the buffered summaries, asks the backend, and enqueues at most
/// one recommendation (none for an empty window). Window ids increase by one
/// per closed window whether or not it was empty.
class Supervisor {
 public:
  Supervisor(SupervisorConfig scfg, ThermalConfig tcfg, AgentBus& bus,
             std::function<double()> alpha_provider,
             std::unique_ptr<SupervisorBackend> backend);

  void tick(double now);

  std::int64_t windows_closed() const { return window_id_; }
  std::size_t buffered_summaries() const { return buffer_.size(); }
  const std::vector<RecommendationLogRow>& log() const { return log_; }

 private:
  void close_window(double boundary);
  double resolve_alpha(const ToolCall& call, double current_alpha) const;

  SupervisorConfig scfg_;
  ThermalConfig tcfg_;
  AgentBus& bus_;
  std::function<double()> alpha_provider_;
  std::unique_ptr<SupervisorBackend> backend_;
  std::vector<EpisodeSummary> buffer_;
  double next_boundary_;
  std::int64_t window_id_ = 0;
  std::vector<RecommendationLogRow> log_;
};

/// Drives tick() from a caller-supplied clock until it yields nothing.
void run_supervisor_loop(Supervisor& sup, const std::function<std::optional<double>()>& next_time);

void write_recommendations(const std::string& path,
                           const std::vector<RecommendationLogRow>& rows);

}  // namespace thermctl
