#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "thermctl/plant.hpp"

namespace thermctl {

struct StepRecord {
  int step_index = 0;  ///< 1-based within the episode
  std::vector<double> sensors_c;
  double peak_c = 0.0;
  std::vector<double> action_raw;
  double reward = 0.0;
};

enum class Termination { Violation, Timeout };

struct EpisodeTrace {
  std::int64_t episode_id = 0;
  std::vector<StepRecord> steps;
  Termination termination = Termination::Timeout;
  double sim_time_end_s = 0.0;
};

/// What the controller transmits after each episode: step count, how many
/// steps ran with the peak sensor inside the near-threshold band, and the
/// mean signed per-step change of the peak temperature.
struct EpisodeSummary {
  std::int64_t episode_id = 0;
  int n_steps = 0;
  int near_threshold_steps = 0;
  double avg_gradient = 0.0;  ///< degC per step, signed
  double danger_pct = 0.0;    ///< near_threshold_steps / n_steps, in [0,1]
  bool terminated_by_violation = false;
  double sim_time_end_s = 0.0;
};

/// Plain arithmetic means over one supervision window. Averages are absent
/// when the window saw no episodes.
struct WindowMetrics {
  std::int64_t window_id = 0;
  int n_episodes = 0;
  std::optional<double> avg_duration_steps;
  std::optional<double> avg_gradient;
  std::optional<double> avg_danger_pct;  ///< fraction in [0,1]
  double current_alpha = 0.0;
};

/// Near-threshold steps count peaks >= danger_floor (threshold - near_band by
/// default). avg_gradient is the mean of consecutive peak differences; a
/// single-step episode reports 0. Throws EmptyTraceError on an empty trace.
EpisodeSummary summarize_episode(const EpisodeTrace& trace, const ThermalConfig& cfg);

WindowMetrics aggregate_window(std::span<const EpisodeSummary> summaries,
                               double current_alpha, std::int64_t window_id = 0);

}  // namespace thermctl
