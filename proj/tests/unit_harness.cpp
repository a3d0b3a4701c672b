#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "thermctl/csv.hpp"
#include "thermctl/errors.hpp"
#include "thermctl/harness.hpp"
#include "thermctl/rng.hpp"

using namespace thermctl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_json(const std::string& leaf, const std::string& body) {
  fs::path p = fs::temp_directory_path() / leaf;
  std::ofstream out(p);
  out << body;
  return p;
}

double cell(const CsvTable& t, std::size_t row, const std::string& col) {
  const int c = t.column_index(col);
  REQUIRE(c >= 0);
  return std::stod(t.rows[row][static_cast<std::size_t>(c)]);
}

// Short agentic ground run sized so several episodes and windows complete in
// well under a second.
ExperimentConfig quick_config(const fs::path& out) {
  ExperimentConfig cfg = default_config(RunMode::Agentic, Environment::Ground);
  cfg.seed = 11;
  cfg.sim_duration_s = 400.0;
  cfg.output_dir = out.string();
  cfg.controller.warmup_steps = 40;
  cfg.controller.batch_size = 32;
  cfg.controller.update_every = 4;
  cfg.controller.max_episode_steps = 60;
  cfg.controller.cooldown_s = 10.0;
  cfg.supervisor.window_duration_s = 100.0;
  return cfg;
}

}  // namespace

TEST_CASE("mode and environment names round-trip") {
  CHECK(to_string(RunMode::Baseline) == "baseline");
  CHECK(to_string(RunMode::Agentic) == "agentic");
  CHECK(to_string(Environment::Ground) == "ground");
  CHECK(to_string(Environment::Orbit) == "orbit");
  CHECK(run_mode_from("baseline") == RunMode::Baseline);
  CHECK(run_mode_from("agentic") == RunMode::Agentic);
  CHECK_FALSE(run_mode_from("turbo").has_value());
  CHECK(environment_from("ground") == Environment::Ground);
  CHECK(environment_from("orbit") == Environment::Orbit);
  CHECK_FALSE(environment_from("sea").has_value());
}

TEST_CASE("latency config builds the matching model") {
  Rng r1(1);
  LatencyConfig fixed;
  fixed.kind = "fixed";
  fixed.fixed_s = 2.5;
  CHECK(fixed.build().sample(r1) == 2.5);

  LatencyConfig uni;
  uni.kind = "uniform";
  uni.lo_s = 1.0;
  uni.hi_s = 2.0;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const double v = uni.build().sample(rng);
    CHECK(v >= 1.0);
    CHECK(v < 2.0);
  }

  // Empirical with no samples falls back to the stock trace.
  LatencyConfig emp;
  emp.kind = "empirical";
  Rng r3(3);
  double max_seen = 0.0;
  for (int i = 0; i < 400; ++i) max_seen = std::max(max_seen, emp.build().sample(r3));
  CHECK(max_seen == doctest::Approx(503.93877));

  LatencyConfig bad;
  bad.kind = "sometimes";
  CHECK_THROWS_AS(bad.build(), ConfigError);
  LatencyConfig badrange;
  badrange.kind = "uniform";
  badrange.lo_s = 3.0;
  badrange.hi_s = 1.0;
  CHECK_THROWS_AS(badrange.build(), ConfigError);
}

TEST_CASE("environment defaults differ where the scenarios do") {
  ExperimentConfig g = default_config(RunMode::Baseline, Environment::Ground);
  CHECK(g.mode == RunMode::Baseline);
  CHECK(g.sim_duration_s == 14400.0);
  CHECK(g.supervisor.window_duration_s == 3600.0);
  CHECK(g.latency.kind == "fixed");
  CHECK(g.latency.fixed_s == 0.0);
  CHECK(std::holds_alternative<GroundAmbient>(g.ambient));
  CHECK(g.early_slice() == doctest::Approx(7200.0));
  CHECK_NOTHROW(g.validate());

  ExperimentConfig o = default_config(RunMode::Agentic, Environment::Orbit);
  CHECK(o.sim_duration_s == 16200.0);
  CHECK(o.supervisor.window_duration_s == 900.0);
  CHECK(o.latency.kind == "empirical");
  CHECK(std::holds_alternative<OrbitalAmbient>(o.ambient));
  CHECK_NOTHROW(o.validate());
}

TEST_CASE("experiment validation names the offending field") {
  ExperimentConfig cfg = default_config(RunMode::Agentic, Environment::Ground);
  cfg.sim_duration_s = 0.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), "sim_duration_s must be positive", ConfigError);

  cfg = default_config(RunMode::Agentic, Environment::Ground);
  cfg.early_slice_s = cfg.sim_duration_s + 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = default_config(RunMode::Agentic, Environment::Ground);
  cfg.output_dir.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = default_config(RunMode::Agentic, Environment::Ground);
  cfg.reward.violation_penalty = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = default_config(RunMode::Agentic, Environment::Orbit);
  std::get<OrbitalAmbient>(cfg.ambient).sun_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config files overlay environment defaults") {
  const fs::path p = write_json("thermctl_cfg_full.json", R"({
    "mode": "baseline",
    "environment": "orbit",
    "seed": 42,
    "sim_duration_s": 5400,
    "early_slice_s": 900,
    "output_dir": "runs/x",
    "thermal": {"sensor_noise_c": 0.0, "dt_s": 0.5},
    "ambient": {"sun_temp_c": 50.0, "transition_width_s": 200.0},
    "controller": {"warmup_steps": 10, "per_core_actions": true},
    "reward": {"w_cpu": 0.7},
    "supervisor": {
      "window_duration_s": 450,
      "backend": "remote",
      "mixed_adjust": true,
      "increase_range": [0.5, 0.9],
      "remote": {"endpoint": "http://remote:1234/v1/chat/completions", "timeout_s": 3}
    },
    "latency": {"kind": "uniform", "lo_s": 5, "hi_s": 25}
  })");

  ExperimentConfig cfg = load_config(p);
  CHECK(cfg.mode == RunMode::Baseline);
  CHECK(cfg.environment == Environment::Orbit);
  CHECK(cfg.seed == 42);
  CHECK(cfg.sim_duration_s == 5400.0);
  CHECK(cfg.early_slice_s == 900.0);
  CHECK(cfg.output_dir == "runs/x");
  CHECK(cfg.thermal.sensor_noise_c == 0.0);
  CHECK(cfg.thermal.dt_s == 0.5);
  CHECK(std::get<OrbitalAmbient>(cfg.ambient).sun_temp_c == 50.0);
  // Unset ambient keys keep the orbital defaults.
  CHECK(std::get<OrbitalAmbient>(cfg.ambient).period_s == 5400.0);
  CHECK(cfg.controller.warmup_steps == 10);
  CHECK(cfg.controller.per_core_actions);
  CHECK(cfg.reward.w_cpu == 0.7);
  CHECK(cfg.supervisor.window_duration_s == 450.0);
  CHECK(cfg.supervisor.backend == SupervisorBackendKind::Remote);
  CHECK(cfg.supervisor.mixed_adjust);
  CHECK(cfg.supervisor.increase_range.lo == 0.5);
  CHECK(cfg.supervisor.increase_range.hi == 0.9);
  CHECK(cfg.supervisor.remote.endpoint == "http://remote:1234/v1/chat/completions");
  CHECK(cfg.supervisor.remote.timeout_s == 3.0);
  CHECK(cfg.latency.kind == "uniform");
  CHECK(cfg.latency.lo_s == 5.0);
  CHECK(cfg.latency.hi_s == 25.0);
  fs::remove(p);
}

TEST_CASE("empty config means agentic ground defaults") {
  const fs::path p = write_json("thermctl_cfg_empty.json", "{}");
  ExperimentConfig cfg = load_config(p);
  CHECK(cfg.mode == RunMode::Agentic);
  CHECK(cfg.environment == Environment::Ground);
  CHECK(cfg.sim_duration_s == 14400.0);
  fs::remove(p);
}

TEST_CASE("config errors carry the key path") {
  const fs::path unknown_top = write_json("thermctl_cfg_k1.json", R"({"speed": 9})");
  CHECK_THROWS_WITH_AS(load_config(unknown_top), "unknown config key config.speed",
                       ConfigError);

  const fs::path unknown_nested =
      write_json("thermctl_cfg_k2.json", R"({"supervisor": {"tempo": 1}})");
  CHECK_THROWS_WITH_AS(load_config(unknown_nested), "unknown config key supervisor.tempo",
                       ConfigError);

  const fs::path wrong_type =
      write_json("thermctl_cfg_k3.json", R"({"controller": {"warmup_steps": "soon"}})");
  CHECK_THROWS_WITH_AS(load_config(wrong_type), "controller.warmup_steps has the wrong type",
                       ConfigError);

  const fs::path bad_mode = write_json("thermctl_cfg_k4.json", R"({"mode": "hybrid"})");
  CHECK_THROWS_AS(load_config(bad_mode), ConfigError);

  const fs::path bad_json = write_json("thermctl_cfg_k5.json", "{nope");
  CHECK_THROWS_AS(load_config(bad_json), ConfigError);

  CHECK_THROWS_AS(load_config(fs::temp_directory_path() / "thermctl_no_such.json"),
                  ConfigError);

  for (const auto& leaf : {"thermctl_cfg_k1.json", "thermctl_cfg_k2.json",
                           "thermctl_cfg_k3.json", "thermctl_cfg_k4.json",
                           "thermctl_cfg_k5.json"})
    fs::remove(fs::temp_directory_path() / leaf);
}

TEST_CASE("environment variables override the remote backend") {
  setenv("THERMCTL_LLM_ENDPOINT", "http://10.0.0.9:9999/v1/chat/completions", 1);
  setenv("THERMCTL_LLM_MODEL", "bigger-model", 1);
  setenv("THERMCTL_LLM_TIMEOUT_S", "7.5", 1);

  ExperimentConfig cfg = default_config(RunMode::Agentic, Environment::Ground);
  apply_env_overrides(cfg);
  CHECK(cfg.supervisor.remote.endpoint == "http://10.0.0.9:9999/v1/chat/completions");
  CHECK(cfg.supervisor.remote.model == "bigger-model");
  CHECK(cfg.supervisor.remote.timeout_s == 7.5);

  setenv("THERMCTL_LLM_TIMEOUT_S", "fast", 1);
  CHECK_THROWS_AS(apply_env_overrides(cfg), ConfigError);
  setenv("THERMCTL_LLM_TIMEOUT_S", "-1", 1);
  CHECK_THROWS_AS(apply_env_overrides(cfg), ConfigError);

  unsetenv("THERMCTL_LLM_ENDPOINT");
  unsetenv("THERMCTL_LLM_MODEL");
  unsetenv("THERMCTL_LLM_TIMEOUT_S");
}

TEST_CASE("comparison covers both horizons and flips sign when swapped") {
  MetricsReport base, agentic;
  base.duration_early = {47.17, 0.0, 6};
  agentic.duration_early = {78.83, 0.0, 6};
  base.violations_early = 39.33;
  agentic.violations_early = 16.33;
  base.cpu_early = {16.0, 0.0, 100};
  agentic.cpu_early = {16.3, 0.0, 100};
  base.duration_full = {50.0, 0.0, 10};
  agentic.duration_full = {60.0, 0.0, 10};
  base.violations_full = 40.0;
  agentic.violations_full = 30.0;
  base.cpu_full = {16.49, 0.0, 200};
  agentic.cpu_full = {16.24, 0.0, 200};

  auto recs = compare(base, agentic);
  REQUIRE(recs.size() == 6);
  CHECK(recs[0].metric == "duration_early");
  CHECK(recs[0].percent_change == doctest::Approx(67.14).epsilon(0.001));
  CHECK(recs[1].metric == "violations_early");
  CHECK(recs[1].percent_change == doctest::Approx(-58.48).epsilon(0.001));
  CHECK(recs[2].metric == "cpu_early");
  CHECK(recs[2].percent_change > 0.0);
  CHECK(recs[3].metric == "duration_full");
  CHECK(recs[3].percent_change == doctest::Approx(20.0));
  CHECK(recs[4].metric == "violations_full");
  CHECK(recs[4].percent_change == doctest::Approx(-25.0));
  CHECK(recs[5].metric == "cpu_full");
  CHECK(recs[5].percent_change == doctest::Approx(-1.516).epsilon(0.001));

  auto swapped = compare(agentic, base);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(std::signbit(swapped[i].percent_change) != std::signbit(recs[i].percent_change));
    CHECK(swapped[i].baseline == recs[i].agentic);
  }

  // Zero baselines have no defined percent change.
  base.violations_early = 0.0;
  auto with_zero = compare(base, agentic);
  CHECK(std::isnan(with_zero[1].percent_change));
}

TEST_CASE("seed aggregation treats run means as samples") {
  MetricsReport a, b;
  a.sim_duration_s = b.sim_duration_s = 400.0;
  a.early_slice_s = b.early_slice_s = 100.0;
  a.episodes_completed = 10;
  b.episodes_completed = 14;
  a.violations_full = 4.0;
  b.violations_full = 6.0;
  a.duration_full = {30.0, 5.0, 10};
  b.duration_full = {40.0, 7.0, 14};
  a.cpu_full = {50.0, 1.0, 400};
  b.cpu_full = {54.0, 2.0, 400};

  MetricsReport agg = aggregate_reports({a, b});
  CHECK(agg.episodes_completed == 12);
  CHECK(agg.violations_full == doctest::Approx(5.0));
  CHECK(agg.duration_full.mean == doctest::Approx(35.0));
  // Sample stddev of {30, 40}.
  CHECK(agg.duration_full.stddev == doctest::Approx(std::sqrt(50.0)));
  CHECK(agg.duration_full.n == 2);
  CHECK(agg.cpu_full.mean == doctest::Approx(52.0));
  CHECK(aggregate_reports({}).episodes_completed == 0);
}

TEST_CASE("a short run writes every log and an honest report") {
  const fs::path out = temp_dir("thermctl_run_short");
  const ExperimentConfig cfg = quick_config(out);
  const MetricsReport report = run_experiment(cfg);

  for (const auto& leaf :
       {"telemetry.csv", "episodes.csv", "losses.csv", "recommendations.csv",
        "bus_events.csv", "report.txt", "report.json", "plot_episode_mean.csv",
        "plot_alpha_markers.csv", "plot_latency.csv"})
    CHECK(fs::exists(out / leaf));

  // One telemetry row per plant step plus the initial state.
  const CsvTable telem = read_csv((out / "telemetry.csv").string());
  CHECK(telem.rows.size() == 401);
  CHECK(cell(telem, 0, "sim_time") == 0.0);
  CHECK(cell(telem, telem.rows.size() - 1, "sim_time") == 400.0);

  // The report must agree with a recount of episodes.csv.
  const CsvTable eps = read_csv((out / "episodes.csv").string());
  REQUIRE(!eps.rows.empty());
  CHECK(report.episodes_completed == static_cast<long>(eps.rows.size()));
  double viol_full = 0.0, viol_early = 0.0, dur_sum = 0.0;
  long early_n = 0;
  double dur_early_sum = 0.0;
  for (std::size_t i = 0; i < eps.rows.size(); ++i) {
    const double steps = cell(eps, i, "n_steps");
    const double viol = cell(eps, i, "violation");
    const double end = cell(eps, i, "sim_time_end");
    dur_sum += steps;
    viol_full += viol;
    if (end <= report.early_slice_s + 1e-9) {
      viol_early += viol;
      dur_early_sum += steps;
      ++early_n;
    }
  }
  CHECK(report.violations_full == doctest::Approx(viol_full));
  CHECK(report.violations_early == doctest::Approx(viol_early));
  CHECK(report.duration_full.mean ==
        doctest::Approx(dur_sum / static_cast<double>(eps.rows.size())).epsilon(1e-12));
  CHECK(report.duration_full.n == static_cast<long>(eps.rows.size()));
  CHECK(report.duration_early.n == early_n);
  if (early_n > 0)
    CHECK(report.duration_early.mean ==
          doctest::Approx(dur_early_sum / static_cast<double>(early_n)).epsilon(1e-12));

  // CPU is tallied once per plant step.
  CHECK(report.cpu_full.n == 400);
  CHECK(report.cpu_full.mean > 0.0);
  CHECK(report.cpu_full.mean <= 100.0);

  // 400 s of 100 s windows.
  REQUIRE(report.windows.size() == 4);
  int windowed_episodes = 0;
  for (const auto& w : report.windows) windowed_episodes += w.n_episodes;
  CHECK(windowed_episodes == report.episodes_completed);

  // report.json round-trips the same numbers.
  const MetricsReport back = read_report_json(out / "report.json");
  CHECK(back.episodes_completed == report.episodes_completed);
  CHECK(back.violations_full == report.violations_full);
  CHECK(back.duration_full.mean == doctest::Approx(report.duration_full.mean));
  CHECK(back.cpu_early.stddev == doctest::Approx(report.cpu_early.stddev));
  REQUIRE(back.windows.size() == report.windows.size());
  CHECK(back.windows[3].alpha_at_close ==
        doctest::Approx(report.windows[3].alpha_at_close));

  // The running mean in the plot series is the brute-force mean of all
  // episodes completed so far.
  const CsvTable mean = read_csv((out / "plot_episode_mean.csv").string());
  REQUIRE(mean.rows.size() == eps.rows.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.rows.size(); ++i) {
    acc += cell(eps, i, "n_steps");
    CHECK(cell(mean, i, "iteration") == static_cast<double>(i + 1));
    CHECK(cell(mean, i, "running_mean_steps") ==
          doctest::Approx(acc / static_cast<double>(i + 1)).epsilon(1e-12));
  }

  fs::remove_all(out);
}

TEST_CASE("plot emission is reproducible and demands its inputs") {
  const fs::path out = temp_dir("thermctl_run_plots");
  run_experiment(quick_config(out));

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const std::string before_mean = slurp(out / "plot_episode_mean.csv");
  const std::string before_markers = slurp(out / "plot_alpha_markers.csv");
  const std::string before_latency = slurp(out / "plot_latency.csv");
  REQUIRE(!before_mean.empty());

  fs::remove(out / "plot_episode_mean.csv");
  fs::remove(out / "plot_alpha_markers.csv");
  fs::remove(out / "plot_latency.csv");
  emit_plot_data(out);
  CHECK(slurp(out / "plot_episode_mean.csv") == before_mean);
  CHECK(slurp(out / "plot_alpha_markers.csv") == before_markers);
  CHECK(slurp(out / "plot_latency.csv") == before_latency);

  fs::remove(out / "episodes.csv");
  CHECK_THROWS_AS(emit_plot_data(out), MissingLogError);
  fs::remove_all(out);
}

TEST_CASE("runs are reproducible byte for byte") {
  const fs::path a = temp_dir("thermctl_run_det_a");
  const fs::path b = temp_dir("thermctl_run_det_b");
  ExperimentConfig ca = quick_config(a);
  ExperimentConfig cb = quick_config(b);
  run_experiment(ca);
  run_experiment(cb);

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  for (const auto& leaf : {"telemetry.csv", "episodes.csv", "losses.csv",
                           "recommendations.csv", "bus_events.csv", "report.json"}) {
    CHECK(slurp(a / leaf) == slurp(b / leaf));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}
