#include "thermctl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thermctl/csv.hpp"
#include "thermctl/errors.hpp"
#include "thermctl/rng.hpp"

namespace thermctl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTimeEps = 1e-9;

struct Accum {
  double sum = 0.0, sumsq = 0.0;
  long n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  MetricSummary summary() const {
    MetricSummary s;
    s.n = n;
    if (n > 0) s.mean = sum / static_cast<double>(n);
    if (n > 1) {
      const double var = (sumsq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
      s.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return s;
  }
};

std::vector<std::string> telemetry_columns(const ThermalConfig& cfg) {
  std::vector<std::string> cols{"sim_time", "step"};
  for (int i = 0; i < cfg.sensor_count; ++i) cols.push_back("T_sensor_" + std::to_string(i));
  cols.push_back("T_ambient");
  cols.push_back("active_cores");
  cols.push_back("mean_freq_ghz");
  cols.push_back("power_w");
  return cols;
}

json summary_json(const MetricSummary& s) {
  return json{{"mean", s.mean}, {"stddev", s.stddev}, {"n", s.n}};
}

MetricSummary summary_from_json(const json& node) {
  MetricSummary s;
  s.mean = node.at("mean").get<double>();
  s.stddev = node.at("stddev").get<double>();
  s.n = node.at("n").get<long>();
  return s;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  const bool agentic = cfg.mode == RunMode::Agentic;
  const bool per_core = cfg.controller.per_core_actions;
  const int adim = action_dim_for(cfg.thermal, per_core);
  const double dt = cfg.thermal.dt_s;
  const double sim_end = cfg.sim_duration_s;
  const double early_end = cfg.early_slice();
  const double window_s = cfg.supervisor.window_duration_s;

  PlantState plant = make_plant(cfg.thermal, cfg.ambient, derive_stream_seed(cfg.seed, 0));
  SacAgent agent(observation_dim(cfg.thermal, per_core), adim, cfg.controller,
                 derive_stream_seed(cfg.seed, 1));
  AgentBus bus(cfg.latency.build(), derive_stream_seed(cfg.seed, 2));
  ReplayBuffer buffer(cfg.controller.buffer_capacity);

  std::optional<Supervisor> supervisor;
  if (agentic)
    supervisor.emplace(cfg.supervisor, cfg.thermal, bus, [&agent] { return agent.alpha(); },
                       make_backend(cfg.supervisor));

  CsvWriter telemetry((out / "telemetry.csv").string(), telemetry_columns(cfg.thermal));
  CsvWriter episodes((out / "episodes.csv").string(),
                     {"episode_id", "n_steps", "near_threshold_steps", "avg_gradient",
                      "danger_pct", "violation", "sim_time_end"});
  CsvWriter losses((out / "losses.csv").string(),
                   {"update_idx", "critic_loss", "actor_loss", "alpha", "alpha_mode"});

  long plant_step = 0;
  long global_step = 0;
  long update_idx = 0;

  std::vector<EpisodeSummary> summaries;
  std::vector<double> alpha_at_boundary;
  double next_boundary = window_s;

  Accum acc_cpu_full, acc_cpu_early;

  auto write_telemetry = [&](const SensorReadings& readings) {
    int active = 0;
    double freq_sum = 0.0, power = 0.0;
    for (const CoreState& c : plant.cores) {
      power += core_power(c, cfg.thermal);
      if (c.active) {
        ++active;
        freq_sum += c.frequency_ghz;
      }
    }
    std::vector<std::string> cells;
    cells.reserve(readings.size() + 6);
    cells.push_back(format_double(plant.sim_time_s));
    cells.push_back(std::to_string(plant_step));
    for (double r : readings) cells.push_back(format_double(r));
    cells.push_back(format_double(ambient_at(cfg.ambient, plant.sim_time_s)));
    cells.push_back(std::to_string(active));
    cells.push_back(format_double(active > 0 ? freq_sum / active : 0.0));
    cells.push_back(format_double(power));
    telemetry.row(cells);
  };

  auto record_cpu = [&](double util) {
    acc_cpu_full.add(util * 100.0);
    if (plant.sim_time_s <= early_end + kTimeEps) acc_cpu_early.add(util * 100.0);
  };

  // Window boundaries are crossed after the supervisor has seen the step, so
  // the recorded alpha matches what the window closed with.
  auto cross_boundaries = [&] {
    while (next_boundary <= sim_end + kTimeEps &&
           plant.sim_time_s + kTimeEps >= next_boundary) {
      alpha_at_boundary.push_back(agent.alpha());
      next_boundary += window_s;
    }
  };

  std::vector<CoreCommand> park;
  for (int i = 1; i < cfg.thermal.total_cores; ++i)
    park.push_back({i, false, cfg.thermal.f_min_ghz});
  const long cooldown_steps = std::lround(cfg.controller.cooldown_s / dt);

  EpisodeTrace trace;
  std::int64_t episode_id = 0;
  trace.episode_id = ++episode_id;
  int step_in_episode = 0;

  SensorReadings readings = read_sensors(plant, cfg.thermal);
  write_telemetry(readings);
  Eigen::VectorXd prev_action = Eigen::VectorXd::Zero(adim);
  Eigen::VectorXd obs =
      build_observation(readings, ambient_at(cfg.ambient, 0.0),
                        cpu_utilization(plant.cores, cfg.thermal), prev_action, cfg.thermal);

  while (plant.sim_time_s + dt <= sim_end + kTimeEps) {
    // At most one recommendation is applied per control step; anything else
    // visible waits for the next step. Applied before the update below, so a
    // recommendation visible at step k shapes step k+1's gradients.
    if (agentic) {
      if (auto rec = bus.poll_recommendation(plant.sim_time_s)) {
        // A plain keep is advisory: auto-tuning stays in charge of alpha.
        if (rec->pin_alpha) agent.set_alpha(rec->alpha);
      }
    }

    Eigen::VectorXd action = global_step < cfg.controller.warmup_steps
                                 ? agent.random_action()
                                 : agent.select_action(obs);
    auto commands = decode_action(action, cfg.thermal, per_core);
    step_plant(plant, commands, cfg.ambient, cfg.thermal);
    ++plant_step;
    ++global_step;
    ++step_in_episode;

    readings = read_sensors(plant, cfg.thermal);
    const double util = cpu_utilization(plant.cores, cfg.thermal);
    const RewardResult rr = compute_reward(readings, util, cfg.thermal, cfg.reward);
    const bool timeout = !rr.violation && step_in_episode >= cfg.controller.max_episode_steps;

    Eigen::VectorXd next_obs = build_observation(
        readings, ambient_at(cfg.ambient, plant.sim_time_s), util, action, cfg.thermal);
    buffer.add({obs, action, rr.reward, next_obs, rr.violation});

    trace.steps.push_back({step_in_episode, readings, peak_of(readings),
                           std::vector<double>(action.data(), action.data() + adim),
                           rr.reward});
    write_telemetry(readings);
    record_cpu(util);

    if (global_step >= cfg.controller.warmup_steps &&
        buffer.size() >= static_cast<std::size_t>(cfg.controller.batch_size) &&
        global_step % cfg.controller.update_every == 0) {
      const UpdateStats st = agent.update(buffer);
      losses.row({std::to_string(++update_idx), format_double(st.critic_loss),
                  format_double(st.actor_loss), format_double(st.alpha),
                  to_string(st.alpha_mode)});
    }

    if (agentic) supervisor->tick(plant.sim_time_s);
    cross_boundaries();

    if (rr.violation || timeout) {
      trace.termination = rr.violation ? Termination::Violation : Termination::Timeout;
      trace.sim_time_end_s = plant.sim_time_s;
      const EpisodeSummary s = summarize_episode(trace, cfg.thermal);
      summaries.push_back(s);
      episodes.row({std::to_string(s.episode_id), std::to_string(s.n_steps),
                    std::to_string(s.near_threshold_steps), format_double(s.avg_gradient),
                    format_double(s.danger_pct), s.terminated_by_violation ? "1" : "0",
                    format_double(s.sim_time_end_s)});
      if (agentic) bus.send_summary(s, plant.sim_time_s);

      // Managed cores park for the cooldown; the controller neither acts nor
      // polls, but telemetry and supervision continue on the shared clock.
      for (long i = 0; i < cooldown_steps && plant.sim_time_s + dt <= sim_end + kTimeEps; ++i) {
        step_plant(plant, park, cfg.ambient, cfg.thermal);
        ++plant_step;
        readings = read_sensors(plant, cfg.thermal);
        write_telemetry(readings);
        record_cpu(cpu_utilization(plant.cores, cfg.thermal));
        if (agentic) supervisor->tick(plant.sim_time_s);
        cross_boundaries();
      }

      trace = EpisodeTrace{};
      trace.episode_id = ++episode_id;
      step_in_episode = 0;
      prev_action.setZero();
      obs = build_observation(readings, ambient_at(cfg.ambient, plant.sim_time_s),
                              cpu_utilization(plant.cores, cfg.thermal), prev_action,
                              cfg.thermal);
      continue;
    }
    obs = std::move(next_obs);
  }

  telemetry.flush();
  episodes.flush();
  losses.flush();
  write_recommendations((out / "recommendations.csv").string(),
                        supervisor ? supervisor->log() : std::vector<RecommendationLogRow>{});
  write_bus_events((out / "bus_events.csv").string(), bus.events());

  MetricsReport report;
  report.sim_duration_s = sim_end;
  report.early_slice_s = early_end;
  report.episodes_completed = static_cast<long>(summaries.size());
  Accum dur_full, dur_early;
  for (const EpisodeSummary& s : summaries) {
    dur_full.add(s.n_steps);
    if (s.terminated_by_violation) report.violations_full += 1.0;
    if (s.sim_time_end_s <= early_end + kTimeEps) {
      dur_early.add(s.n_steps);
      if (s.terminated_by_violation) report.violations_early += 1.0;
    }
  }
  report.duration_full = dur_full.summary();
  report.duration_early = dur_early.summary();
  report.cpu_full = acc_cpu_full.summary();
  report.cpu_early = acc_cpu_early.summary();

  // A trailing partial window closes with the final alpha.
  if (static_cast<double>(alpha_at_boundary.size()) * window_s < sim_end - kTimeEps)
    alpha_at_boundary.push_back(agent.alpha());
  const int n_windows = static_cast<int>(alpha_at_boundary.size());
  std::vector<WindowBreakdownRow> rows(static_cast<std::size_t>(n_windows));
  std::vector<Accum> wdur(rows.size()), wdanger(rows.size());
  for (int w = 0; w < n_windows; ++w) {
    rows[w].window_id = w + 1;
    rows[w].alpha_at_close = alpha_at_boundary[static_cast<std::size_t>(w)];
  }
  for (const EpisodeSummary& s : summaries) {
    int w = static_cast<int>(std::ceil((s.sim_time_end_s - kTimeEps) / window_s));
    w = std::clamp(w, 1, n_windows);
    rows[static_cast<std::size_t>(w - 1)].n_episodes += 1;
    wdur[static_cast<std::size_t>(w - 1)].add(s.n_steps);
    wdanger[static_cast<std::size_t>(w - 1)].add(s.danger_pct);
  }
  for (int w = 0; w < n_windows; ++w) {
    rows[static_cast<std::size_t>(w)].avg_duration_steps = wdur[static_cast<std::size_t>(w)].summary().mean;
    rows[static_cast<std::size_t>(w)].avg_danger_pct = wdanger[static_cast<std::size_t>(w)].summary().mean;
  }
  report.windows = std::move(rows);

  write_report(out, report);
  emit_plot_data(out);
  return report;
}

std::vector<ComparisonRecord> compare(const MetricsReport& baseline,
                                      const MetricsReport& agentic) {
  auto rec = [](std::string name, double base, double val) {
    ComparisonRecord r{std::move(name), base, val, 0.0};
    r.percent_change = base != 0.0 ? (val - base) / base * 100.0
                                   : std::numeric_limits<double>::quiet_NaN();
    return r;
  };
  return {rec("duration_early", baseline.duration_early.mean, agentic.duration_early.mean),
          rec("violations_early", baseline.violations_early, agentic.violations_early),
          rec("cpu_early", baseline.cpu_early.mean, agentic.cpu_early.mean),
          rec("duration_full", baseline.duration_full.mean, agentic.duration_full.mean),
          rec("violations_full", baseline.violations_full, agentic.violations_full),
          rec("cpu_full", baseline.cpu_full.mean, agentic.cpu_full.mean)};
}

MetricsReport aggregate_reports(const std::vector<MetricsReport>& runs) {
  MetricsReport agg;
  if (runs.empty()) return agg;
  Accum viol_f, viol_e, dur_f, dur_e, cpu_f, cpu_e, eps;
  for (const MetricsReport& r : runs) {
    viol_f.add(r.violations_full);
    viol_e.add(r.violations_early);
    dur_f.add(r.duration_full.mean);
    dur_e.add(r.duration_early.mean);
    cpu_f.add(r.cpu_full.mean);
    cpu_e.add(r.cpu_early.mean);
    eps.add(static_cast<double>(r.episodes_completed));
  }
  agg.sim_duration_s = runs.front().sim_duration_s;
  agg.early_slice_s = runs.front().early_slice_s;
  agg.episodes_completed = std::lround(eps.summary().mean);
  agg.violations_full = viol_f.summary().mean;
  agg.violations_early = viol_e.summary().mean;
  agg.duration_full = dur_f.summary();
  agg.duration_early = dur_e.summary();
  agg.cpu_full = cpu_f.summary();
  agg.cpu_early = cpu_e.summary();
  return agg;
}

std::string render_report(const MetricsReport& r) {
  std::string s;
  char buf[192];
  auto line = [&](const char* f, auto... args) {
    std::snprintf(buf, sizeof(buf), f, args...);
    s += buf;
    s += '\n';
  };
  line("%s", "run summary");
  line("  sim duration        %s s", format_double(r.sim_duration_s).c_str());
  line("  early slice         %s s", format_double(r.early_slice_s).c_str());
  line("  episodes completed  %ld", r.episodes_completed);
  line("  violations          early %.6g  full %.6g", r.violations_early, r.violations_full);
  line("  duration steps      early %.4f +/- %.4f (n=%ld)  full %.4f +/- %.4f (n=%ld)",
       r.duration_early.mean, r.duration_early.stddev, r.duration_early.n,
       r.duration_full.mean, r.duration_full.stddev, r.duration_full.n);
  line("  cpu percent         early %.4f +/- %.4f  full %.4f +/- %.4f", r.cpu_early.mean,
       r.cpu_early.stddev, r.cpu_full.mean, r.cpu_full.stddev);
  if (!r.windows.empty()) {
    line("%s", "window breakdown");
    line("  %-8s %-9s %-11s %-11s %s", "window", "episodes", "avg_steps", "danger_pct",
         "alpha");
    for (const WindowBreakdownRow& w : r.windows)
      line("  %-8lld %-9d %-11.4f %-11.4f %.4f", static_cast<long long>(w.window_id),
           w.n_episodes, w.avg_duration_steps, w.avg_danger_pct, w.alpha_at_close);
  }
  return s;
}

void write_report(const fs::path& dir, const MetricsReport& r) {
  {
    std::ofstream txt(dir / "report.txt");
    txt << render_report(r);
  }
  json j;
  j["sim_duration_s"] = r.sim_duration_s;
  j["early_slice_s"] = r.early_slice_s;
  j["episodes_completed"] = r.episodes_completed;
  j["violations_full"] = r.violations_full;
  j["violations_early"] = r.violations_early;
  j["duration_full"] = summary_json(r.duration_full);
  j["duration_early"] = summary_json(r.duration_early);
  j["cpu_full"] = summary_json(r.cpu_full);
  j["cpu_early"] = summary_json(r.cpu_early);
  j["windows"] = json::array();
  for (const WindowBreakdownRow& w : r.windows)
    j["windows"].push_back(json{{"window_id", w.window_id},
                                {"n_episodes", w.n_episodes},
                                {"avg_duration_steps", w.avg_duration_steps},
                                {"avg_danger_pct", w.avg_danger_pct},
                                {"alpha_at_close", w.alpha_at_close}});
  std::ofstream out(dir / "report.json");
  out << j.dump(2) << '\n';
}

MetricsReport read_report_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingLogError("missing report: " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("report is not valid JSON: " + std::string(e.what()));
  }
  MetricsReport r;
  try {
    r.sim_duration_s = j.at("sim_duration_s").get<double>();
    r.early_slice_s = j.at("early_slice_s").get<double>();
    r.episodes_completed = j.at("episodes_completed").get<long>();
    r.violations_full = j.at("violations_full").get<double>();
    r.violations_early = j.at("violations_early").get<double>();
    r.duration_full = summary_from_json(j.at("duration_full"));
    r.duration_early = summary_from_json(j.at("duration_early"));
    r.cpu_full = summary_from_json(j.at("cpu_full"));
    r.cpu_early = summary_from_json(j.at("cpu_early"));
    for (const json& wn : j.at("windows")) {
      WindowBreakdownRow w;
      w.window_id = wn.at("window_id").get<std::int64_t>();
      w.n_episodes = wn.at("n_episodes").get<int>();
      w.avg_duration_steps = wn.at("avg_duration_steps").get<double>();
      w.avg_danger_pct = wn.at("avg_danger_pct").get<double>();
      w.alpha_at_close = wn.at("alpha_at_close").get<double>();
      r.windows.push_back(w);
    }
  } catch (const json::exception& e) {
    throw ConfigError("report is missing fields: " + std::string(e.what()));
  }
  return r;
}

void emit_plot_data(const fs::path& run_dir) {
  const CsvTable eps = read_csv((run_dir / "episodes.csv").string());
  const CsvTable recs = read_csv((run_dir / "recommendations.csv").string());
  const CsvTable events = read_csv((run_dir / "bus_events.csv").string());

  const int c_steps = eps.column_index("n_steps");
  const int c_end = eps.column_index("sim_time_end");
  if (c_steps < 0 || c_end < 0)
    throw MissingLogError("episodes.csv lacks n_steps/sim_time_end columns");

  std::vector<double> ends;
  {
    CsvWriter em((run_dir / "plot_episode_mean.csv").string(),
                 {"iteration", "running_mean_steps"});
    double sum = 0.0;
    long k = 0;
    for (const auto& row : eps.rows) {
      sum += std::stod(row[static_cast<std::size_t>(c_steps)]);
      ++k;
      ends.push_back(std::stod(row[static_cast<std::size_t>(c_end)]));
      em.row({std::to_string(k), format_double(sum / static_cast<double>(k))});
    }
  }

  const int r_window = recs.column_index("window_id");
  const int r_alpha = recs.column_index("alpha");
  const int r_latency = recs.column_index("latency_s");
  if (r_window < 0 || r_alpha < 0 || r_latency < 0)
    throw MissingLogError("recommendations.csv lacks window_id/alpha/latency_s columns");
  std::map<std::string, std::string> alpha_by_window;
  for (const auto& row : recs.rows)
    alpha_by_window[row[static_cast<std::size_t>(r_window)]] =
        row[static_cast<std::size_t>(r_alpha)];

  {
    CsvWriter mk((run_dir / "plot_alpha_markers.csv").string(), {"iteration", "alpha"});
    const int e_kind = events.column_index("payload_kind");
    const int e_polled = events.column_index("polled_at");
    const int e_ref = events.column_index("ref_id");
    if (e_kind < 0 || e_polled < 0 || e_ref < 0)
      throw MissingLogError("bus_events.csv lacks payload_kind/polled_at/ref_id columns");
    for (const auto& row : events.rows) {
      if (row[static_cast<std::size_t>(e_kind)] != "alpha_recommendation") continue;
      const std::string& polled = row[static_cast<std::size_t>(e_polled)];
      if (polled.empty()) continue;
      const auto it = alpha_by_window.find(row[static_cast<std::size_t>(e_ref)]);
      if (it == alpha_by_window.end()) continue;
      const double t = std::stod(polled);
      // The marker lands on the episode in flight when the value was applied.
      const auto count =
          std::upper_bound(ends.begin(), ends.end(), t + kTimeEps) - ends.begin();
      mk.row({std::to_string(count + 1), it->second});
    }
  }

  {
    CsvWriter lat((run_dir / "plot_latency.csv").string(), {"window_id", "latency_s"});
    for (const auto& row : recs.rows)
      lat.row({row[static_cast<std::size_t>(r_window)],
               row[static_cast<std::size_t>(r_latency)]});
  }
}

}  // namespace thermctl
