#include "thermctl/summary.hpp"

#include "thermctl/errors.hpp"

namespace thermctl {

EpisodeSummary summarize_episode(const EpisodeTrace& trace, const ThermalConfig& cfg) {
  if (trace.steps.empty()) throw EmptyTraceError("cannot summarize an empty episode trace");
  EpisodeSummary s;
  s.episode_id = trace.episode_id;
  s.n_steps = static_cast<int>(trace.steps.size());
  for (const auto& step : trace.steps) {
    if (step.peak_c >= cfg.danger_floor_c) ++s.near_threshold_steps;
  }
  if (s.n_steps >= 2) {
    double sum = 0.0;
    for (std::size_t i = 1; i < trace.steps.size(); ++i) {
      sum += trace.steps[i].peak_c - trace.steps[i - 1].peak_c;
    }
    s.avg_gradient = sum / static_cast<double>(s.n_steps - 1);
  }
  s.danger_pct = static_cast<double>(s.near_threshold_steps) / static_cast<double>(s.n_steps);
  s.terminated_by_violation = trace.termination == Termination::Violation;
  s.sim_time_end_s = trace.sim_time_end_s;
  return s;
}

WindowMetrics aggregate_window(std::span<const EpisodeSummary> summaries,
                               double current_alpha, std::int64_t window_id) {
  WindowMetrics m;
  m.window_id = window_id;
  m.n_episodes = static_cast<int>(summaries.size());
  m.current_alpha = current_alpha;
  if (summaries.empty()) return m;
  double dur = 0.0, grad = 0.0, danger = 0.0;
  for (const auto& s : summaries) {
    dur += static_cast<double>(s.n_steps);
    grad += s.avg_gradient;
    danger += s.danger_pct;
  }
  const auto n = static_cast<double>(summaries.size());
  m.avg_duration_steps = dur / n;
  m.avg_gradient = grad / n;
  m.avg_danger_pct = danger / n;
  return m;
}

}  // namespace thermctl
