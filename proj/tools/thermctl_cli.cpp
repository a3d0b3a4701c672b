#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "thermctl/csv.hpp"
#include "thermctl/errors.hpp"
#include "thermctl/harness.hpp"
#include "thermctl/summary.hpp"
#include "thermctl/supervisor.hpp"

namespace fs = std::filesystem;

namespace {

int column_or_throw(const thermctl::CsvTable& table, const std::string& name) {
  const int idx = table.column_index(name);
  if (idx < 0) throw thermctl::ConfigError("summaries file lacks column " + name);
  return idx;
}

double cell_double(const std::vector<std::string>& row, int idx) {
  try {
    return std::stod(row[static_cast<std::size_t>(idx)]);
  } catch (const std::exception&) {
    throw thermctl::ConfigError("malformed numeric cell: " + row[static_cast<std::size_t>(idx)]);
  }
}

std::vector<thermctl::EpisodeSummary> load_summaries(const std::string& path) {
  const thermctl::CsvTable table = thermctl::read_csv(path);
  const int c_id = column_or_throw(table, "episode_id");
  const int c_steps = column_or_throw(table, "n_steps");
  const int c_near = column_or_throw(table, "near_threshold_steps");
  const int c_grad = column_or_throw(table, "avg_gradient");
  const int c_danger = column_or_throw(table, "danger_pct");
  const int c_viol = column_or_throw(table, "violation");
  const int c_end = column_or_throw(table, "sim_time_end");
  std::vector<thermctl::EpisodeSummary> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    thermctl::EpisodeSummary s;
    s.episode_id = static_cast<std::int64_t>(cell_double(row, c_id));
    s.n_steps = static_cast<int>(cell_double(row, c_steps));
    s.near_threshold_steps = static_cast<int>(cell_double(row, c_near));
    s.avg_gradient = cell_double(row, c_grad);
    s.danger_pct = cell_double(row, c_danger);
    s.terminated_by_violation = cell_double(row, c_viol) != 0.0;
    s.sim_time_end_s = cell_double(row, c_end);
    out.push_back(s);
  }
  return out;
}

void run_replay(const std::string& summaries_path, double window_s, double alpha0) {
  const auto summaries = load_summaries(summaries_path);
  if (summaries.empty()) {
    std::puts("no episodes in file");
    return;
  }
  thermctl::SupervisorConfig scfg;
  scfg.window_duration_s = window_s;
  scfg.validate();

  double t_last = 0.0;
  for (const auto& s : summaries) t_last = std::max(t_last, s.sim_time_end_s);
  const auto n_windows = static_cast<std::int64_t>(std::ceil((t_last - 1e-9) / window_s));

  double alpha = alpha0;
  std::printf("%-8s %-9s %-11s %-11s %-22s %s\n", "window", "episodes", "avg_steps",
              "danger_pct", "tool", "alpha");
  for (std::int64_t w = 1; w <= n_windows; ++w) {
    std::vector<thermctl::EpisodeSummary> bucket;
    const double lo = static_cast<double>(w - 1) * window_s;
    const double hi = static_cast<double>(w) * window_s;
    for (const auto& s : summaries)
      if (s.sim_time_end_s > lo + 1e-9 && s.sim_time_end_s <= hi + 1e-9) bucket.push_back(s);
    if (bucket.empty()) {
      std::printf("%-8lld %-9d %-11s %-11s %-22s %s\n", static_cast<long long>(w), 0, "-",
                  "-", "-", thermctl::format_double(alpha).c_str());
      continue;
    }
    const thermctl::WindowMetrics metrics =
        thermctl::aggregate_window(bucket, alpha, w);
    const thermctl::ToolCall call = thermctl::recommend_alpha(metrics, alpha, scfg);
    const double resolved = call.alpha_value ? *call.alpha_value : alpha;
    std::printf("%-8lld %-9d %-11.4f %-11.4f %-22s %s\n", static_cast<long long>(w),
                metrics.n_episodes, metrics.avg_duration_steps.value_or(0.0),
                metrics.avg_danger_pct.value_or(0.0),
                thermctl::to_string(call.tool).c_str(),
                thermctl::format_double(resolved).c_str());
    alpha = resolved;
  }
  std::printf("final alpha: %s\n", thermctl::format_double(alpha).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermal RL controller with windowed alpha supervision"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "execute one experiment (or several seeds)");
  std::string config_path;
  auto* opt_config =
      run_cmd->add_option("--config", config_path, "JSON config file (see README schema)");
  std::uint64_t seed = 1;
  auto* opt_seed = run_cmd->add_option("--seed", seed, "master seed");
  std::string mode_str;
  auto* opt_mode = run_cmd->add_option("--mode", mode_str, "baseline | agentic")
                       ->check(CLI::IsMember({"baseline", "agentic"}));
  std::string env_str;
  auto* opt_env = run_cmd->add_option("--env", env_str, "ground | orbit")
                      ->check(CLI::IsMember({"ground", "orbit"}));
  std::string out_dir;
  auto* opt_out = run_cmd->add_option("--out", out_dir, "output directory");
  int repeats = 1;
  run_cmd->add_option("--repeats", repeats, "number of consecutive seeds to run")
      ->check(CLI::PositiveNumber);

  run_cmd->callback([&] {
    thermctl::ExperimentConfig cfg;
    if (opt_config->count()) {
      cfg = thermctl::load_config(config_path);
      if (opt_mode->count()) cfg.mode = *thermctl::run_mode_from(mode_str);
      if (opt_env->count()) {
        const auto env = *thermctl::environment_from(env_str);
        if (env != cfg.environment) {
          // Switching environments discards the file's ambient section; the
          // profile shape would not fit the other environment.
          cfg.environment = env;
          cfg.ambient = env == thermctl::Environment::Ground
                            ? thermctl::AmbientProfile(thermctl::GroundAmbient{})
                            : thermctl::AmbientProfile(thermctl::OrbitalAmbient{});
        }
      }
    } else {
      const auto mode = opt_mode->count() ? *thermctl::run_mode_from(mode_str)
                                          : thermctl::RunMode::Agentic;
      const auto env = opt_env->count() ? *thermctl::environment_from(env_str)
                                        : thermctl::Environment::Ground;
      cfg = thermctl::default_config(mode, env);
    }
    if (opt_seed->count()) cfg.seed = seed;
    if (opt_out->count()) cfg.output_dir = out_dir;
    thermctl::apply_env_overrides(cfg);

    std::vector<thermctl::MetricsReport> reports;
    reports.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      thermctl::ExperimentConfig run_cfg = cfg;
      run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(r);
      if (repeats > 1)
        run_cfg.output_dir =
            (fs::path(cfg.output_dir) / ("seed_" + std::to_string(run_cfg.seed))).string();
      reports.push_back(thermctl::run_experiment(run_cfg));
      const thermctl::MetricsReport& rep = reports.back();
      std::printf("seed %llu: %ld episodes, %.6g violations, out=%s\n",
                  static_cast<unsigned long long>(run_cfg.seed), rep.episodes_completed,
                  rep.violations_full, run_cfg.output_dir.c_str());
    }
    if (repeats > 1) {
      const thermctl::MetricsReport agg = thermctl::aggregate_reports(reports);
      thermctl::write_report(cfg.output_dir, agg);
      std::fputs(thermctl::render_report(agg).c_str(), stdout);
    } else {
      std::fputs(thermctl::render_report(reports.front()).c_str(), stdout);
    }
  });

  auto* cmp_cmd = app.add_subcommand("compare", "percent changes between two run reports");
  std::string base_dir, agent_dir;
  cmp_cmd->add_option("baseline_dir", base_dir, "directory of the baseline run")->required();
  cmp_cmd->add_option("agentic_dir", agent_dir, "directory of the agentic run")->required();
  cmp_cmd->callback([&] {
    const auto baseline = thermctl::read_report_json(fs::path(base_dir) / "report.json");
    const auto agentic = thermctl::read_report_json(fs::path(agent_dir) / "report.json");
    std::printf("%-18s %12s %12s %10s\n", "metric", "baseline", "agentic", "change");
    for (const auto& rec : thermctl::compare(baseline, agentic)) {
      if (std::isnan(rec.percent_change))
        std::printf("%-18s %12.4f %12.4f %10s\n", rec.metric.c_str(), rec.baseline,
                    rec.agentic, "n/a");
      else
        std::printf("%-18s %12.4f %12.4f %+9.1f%%\n", rec.metric.c_str(), rec.baseline,
                    rec.agentic, rec.percent_change);
    }
  });

  auto* rules_cmd = app.add_subcommand("rules-eval", "query the rule table once");
  double duration = 0.0, danger_percent = 0.0, alpha_cur = 0.2;
  rules_cmd->add_option("--duration", duration, "average episode duration in steps")
      ->required();
  rules_cmd
      ->add_option("--danger", danger_percent, "percent of steps in the danger zone (0..100)")
      ->required();
  rules_cmd->add_option("--alpha", alpha_cur, "current entropy coefficient")->required();
  rules_cmd->callback([&] {
    thermctl::SupervisorConfig scfg;
    thermctl::WindowMetrics metrics;
    metrics.window_id = 0;
    metrics.n_episodes = 1;
    metrics.avg_duration_steps = duration;
    metrics.avg_gradient = 0.0;
    metrics.avg_danger_pct = danger_percent / 100.0;
    metrics.current_alpha = alpha_cur;
    const thermctl::ToolCall call = thermctl::recommend_alpha(metrics, alpha_cur, scfg);
    const double resolved = call.alpha_value ? *call.alpha_value : alpha_cur;
    std::printf("tool: %s\n", thermctl::to_string(call.tool).c_str());
    std::printf("alpha: %s\n", thermctl::format_double(resolved).c_str());
    std::printf("rationale: %s\n", call.rationale.c_str());
  });

  auto* replay_cmd =
      app.add_subcommand("replay", "re-run the supervisor over recorded episode summaries");
  std::string summaries_path;
  replay_cmd->add_option("--summaries", summaries_path, "episodes.csv from a finished run")
      ->required();
  double window_s = 3600.0;
  replay_cmd->add_option("--window", window_s, "window duration in simulated seconds");
  double alpha0 = 0.2;
  replay_cmd->add_option("--alpha", alpha0, "starting entropy coefficient");
  replay_cmd->callback([&] { run_replay(summaries_path, window_s, alpha0); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
