#pragma once

// Experiment orchestration: wires plant, controller, bus and supervisor
// against one simulated clock, writes every module's log, and reduces a run
// to the three comparison metrics (violations, episode duration, CPU
// utilization) over the full horizon and an early slice.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "thermctl/bus.hpp"
#include "thermctl/plant.hpp"
#include "thermctl/sac.hpp"
#include "thermctl/summary.hpp"
#include "thermctl/supervisor.hpp"

namespace thermctl {

enum class RunMode { Baseline, Agentic };
enum class Environment { Ground, Orbit };

std::string to_string(RunMode m);
std::string to_string(Environment e);
std::optional<RunMode> run_mode_from(const std::string& name);
std::optional<Environment> environment_from(const std::string& name);

/// Parsed latency section; build() materializes (and validates) the model.
struct LatencyConfig {
  std::string kind = "fixed";  ///< fixed | uniform | empirical
  double fixed_s = 0.0;
  double lo_s = 0.0, hi_s = 0.0;
  std::vector<double> samples_s;  ///< empirical; empty uses the stock sample set

  LatencyModel build() const;
};

struct ExperimentConfig {
  RunMode mode = RunMode::Agentic;
  Environment environment = Environment::Ground;
  std::uint64_t seed = 1;
  double sim_duration_s = 14400.0;
  double early_slice_s = 0.0;  ///< 0 picks the first half of the run
  std::string output_dir = "out";
  ThermalConfig thermal;
  AmbientProfile ambient = GroundAmbient{};
  SacConfig controller;
  RewardConfig reward;
  SupervisorConfig supervisor;
  LatencyConfig latency;

  double early_slice() const {
    return early_slice_s > 0.0 ? early_slice_s : sim_duration_s / 2.0;
  }
  void validate() const;  ///< ConfigError naming the offending field
};

/// Environment-appropriate defaults: ground = 4 h run, 60 min windows,
/// zero-latency supervision; orbit = 3 orbital periods, 15 min windows,
/// empirical latency.
ExperimentConfig default_config(RunMode mode, Environment env);

/// JSON config file; unknown keys anywhere are rejected with their path.
ExperimentConfig load_config(const std::filesystem::path& path);

/// THERMCTL_LLM_ENDPOINT / THERMCTL_LLM_MODEL / THERMCTL_LLM_TIMEOUT_S
/// override the remote-backend fields.
void apply_env_overrides(ExperimentConfig& cfg);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation, 0 when n < 2
  long n = 0;
};

struct WindowBreakdownRow {
  std::int64_t window_id = 0;
  int n_episodes = 0;
  double avg_duration_steps = 0.0;
  double avg_danger_pct = 0.0;  ///< fraction
  double alpha_at_close = 0.0;
};

struct MetricsReport {
  double sim_duration_s = 0.0;
  double early_slice_s = 0.0;
  long episodes_completed = 0;
  double violations_full = 0.0;  ///< double so seed-averaged reports fit the same shape
  double violations_early = 0.0;
  MetricSummary duration_full, duration_early;  ///< steps per completed episode
  MetricSummary cpu_full, cpu_early;            ///< percent of managed capacity, per step
  std::vector<WindowBreakdownRow> windows;
};

/// Full control loop; writes telemetry.csv, episodes.csv, losses.csv,
/// recommendations.csv, bus_events.csv, report.txt, report.json and the
/// plot series into cfg.output_dir.
MetricsReport run_experiment(const ExperimentConfig& cfg);

struct ComparisonRecord {
  std::string metric;
  double baseline = 0.0;
  double agentic = 0.0;
  double percent_change = 0.0;  ///< (agentic - baseline) / baseline * 100
};

/// Three metrics at both horizons; reductions come out negative.
std::vector<ComparisonRecord> compare(const MetricsReport& baseline,
                                      const MetricsReport& agentic);

/// Across-seed aggregation: each run's means become the samples, so stddev
/// measures seed-to-seed spread.
MetricsReport aggregate_reports(const std::vector<MetricsReport>& runs);

std::string render_report(const MetricsReport& report);
void write_report(const std::filesystem::path& dir, const MetricsReport& report);
MetricsReport read_report_json(const std::filesystem::path& file);

/// Rebuilds plot_episode_mean.csv, plot_alpha_markers.csv and
/// plot_latency.csv from a finished run directory. MissingLogError when a
/// required log is absent.
void emit_plot_data(const std::filesystem::path& run_dir);

}  // namespace thermctl
