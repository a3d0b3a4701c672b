#include "thermctl/harness.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <variant>

#include <json.hpp>

#include "thermctl/errors.hpp"

namespace thermctl {
namespace {

using nlohmann::json;

// Tracks which keys a section consumed so leftovers can be reported with
// their full path. finish() must be called explicitly; throwing from a
// destructor is not an option.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  void get_range(const char* key, AlphaRange& out) {
    std::vector<double> pair;
    get(key, pair);
    if (pair.empty()) return;
    if (pair.size() != 2)
      throw ConfigError(path_ + "." + key + " must be a [lo, hi] pair");
    out.lo = pair[0];
    out.hi = pair[1];
  }

  const json* child(const char* key) {
    if (!obj_.contains(key)) return nullptr;
    seen_.insert(key);
    return &obj_.at(key);
  }

  void finish() const {
    for (const auto& item : obj_.items())
      if (!seen_.count(item.key()))
        throw ConfigError("unknown config key " + path_ + "." + item.key());
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_thermal(const json& node, ThermalConfig& cfg) {
  Section s(node, "thermal");
  s.get("threshold_c", cfg.threshold_c);
  s.get("near_band_c", cfg.near_band_c);
  s.get("danger_floor_c", cfg.danger_floor_c);
  s.get("sensor_count", cfg.sensor_count);
  s.get("f_min_ghz", cfg.f_min_ghz);
  s.get("f_max_ghz", cfg.f_max_ghz);
  s.get("total_cores", cfg.total_cores);
  s.get("managed_cores", cfg.managed_cores);
  s.get("node_capacitance", cfg.node_capacitance);
  s.get("ambient_resistance", cfg.ambient_resistance);
  s.get("inter_node_resistance", cfg.inter_node_resistance);
  s.get("p_static_w", cfg.p_static_w);
  s.get("p_dyn_coeff", cfg.p_dyn_coeff);
  s.get("dt_s", cfg.dt_s);
  s.get("sensor_noise_c", cfg.sensor_noise_c);
  s.finish();
}

void apply_ambient(const json& node, Environment env, AmbientProfile& profile) {
  Section s(node, "ambient");
  if (env == Environment::Ground) {
    auto& g = std::get<GroundAmbient>(profile);
    s.get("conditioned_temp_c", g.conditioned_temp_c);
    s.get("conditioned_duration_s", g.conditioned_duration_s);
    s.get("night_mean_c", g.night_mean_c);
    s.get("night_amplitude_c", g.night_amplitude_c);
    s.get("day_length_s", g.day_length_s);
  } else {
    auto& o = std::get<OrbitalAmbient>(profile);
    s.get("period_s", o.period_s);
    s.get("sun_fraction", o.sun_fraction);
    s.get("sun_temp_c", o.sun_temp_c);
    s.get("eclipse_temp_c", o.eclipse_temp_c);
    s.get("transition_width_s", o.transition_width_s);
  }
  s.finish();
}

void apply_controller(const json& node, SacConfig& cfg) {
  Section s(node, "controller");
  s.get("hidden_dim", cfg.hidden_dim);
  s.get("gamma", cfg.gamma);
  s.get("tau", cfg.tau);
  s.get("actor_lr", cfg.actor_lr);
  s.get("critic_lr", cfg.critic_lr);
  s.get("alpha_lr", cfg.alpha_lr);
  s.get("alpha_init", cfg.alpha_init);
  s.get("target_entropy", cfg.target_entropy);
  s.get("batch_size", cfg.batch_size);
  s.get("buffer_capacity", cfg.buffer_capacity);
  s.get("warmup_steps", cfg.warmup_steps);
  s.get("update_every", cfg.update_every);
  s.get("max_episode_steps", cfg.max_episode_steps);
  s.get("cooldown_s", cfg.cooldown_s);
  s.get("per_core_actions", cfg.per_core_actions);
  s.get("log_std_min", cfg.log_std_min);
  s.get("log_std_max", cfg.log_std_max);
  s.finish();
}

void apply_reward(const json& node, RewardConfig& cfg) {
  Section s(node, "reward");
  s.get("r_survive", cfg.r_survive);
  s.get("w_cpu", cfg.w_cpu);
  s.get("w_safe", cfg.w_safe);
  s.get("margin_band_c", cfg.margin_band_c);
  s.get("violation_penalty", cfg.violation_penalty);
  s.finish();
}

void apply_supervisor(const json& node, SupervisorConfig& cfg) {
  Section s(node, "supervisor");
  s.get("window_duration_s", cfg.window_duration_s);
  std::string backend;
  s.get("backend", backend);
  if (!backend.empty()) {
    if (backend == "rules")
      cfg.backend = SupervisorBackendKind::Rules;
    else if (backend == "remote")
      cfg.backend = SupervisorBackendKind::Remote;
    else
      throw ConfigError("supervisor.backend must be \"rules\" or \"remote\"");
  }
  s.get("alpha_default", cfg.alpha_default);
  s.get_range("increase_range", cfg.increase_range);
  s.get_range("moderate_range", cfg.moderate_range);
  s.get_range("decrease_range", cfg.decrease_range);
  s.get("duration_low_steps", cfg.duration_low_steps);
  s.get("duration_high_steps", cfg.duration_high_steps);
  s.get("danger_low", cfg.danger_low);
  s.get("danger_high", cfg.danger_high);
  s.get("gradient_high", cfg.gradient_high);
  s.get("mixed_adjust", cfg.mixed_adjust);
  if (const json* remote = s.child("remote")) {
    Section r(*remote, "supervisor.remote");
    r.get("endpoint", cfg.remote.endpoint);
    r.get("model", cfg.remote.model);
    r.get("timeout_s", cfg.remote.timeout_s);
    r.finish();
  }
  s.finish();
}

void apply_latency(const json& node, LatencyConfig& cfg) {
  Section s(node, "latency");
  std::string kind;
  s.get("kind", kind);
  if (!kind.empty()) {
    if (kind != "fixed" && kind != "uniform" && kind != "empirical")
      throw ConfigError("latency.kind must be \"fixed\", \"uniform\" or \"empirical\"");
    cfg.kind = kind;
  }
  s.get("fixed_s", cfg.fixed_s);
  s.get("lo_s", cfg.lo_s);
  s.get("hi_s", cfg.hi_s);
  s.get("samples_s", cfg.samples_s);
  s.finish();
}

}  // namespace

std::string to_string(RunMode m) {
  return m == RunMode::Baseline ? "baseline" : "agentic";
}

std::string to_string(Environment e) {
  return e == Environment::Ground ? "ground" : "orbit";
}

std::optional<RunMode> run_mode_from(const std::string& name) {
  if (name == "baseline") return RunMode::Baseline;
  if (name == "agentic") return RunMode::Agentic;
  return std::nullopt;
}

std::optional<Environment> environment_from(const std::string& name) {
  if (name == "ground") return Environment::Ground;
  if (name == "orbit") return Environment::Orbit;
  return std::nullopt;
}

LatencyModel LatencyConfig::build() const {
  if (kind == "fixed") return LatencyModel::fixed(fixed_s);
  if (kind == "uniform") return LatencyModel::uniform(lo_s, hi_s);
  if (kind == "empirical")
    return samples_s.empty() ? LatencyModel::empirical_default()
                             : LatencyModel::empirical(samples_s);
  throw ConfigError("latency.kind must be \"fixed\", \"uniform\" or \"empirical\"");
}

void ExperimentConfig::validate() const {
  thermal.validate();
  controller.validate();
  supervisor.validate();
  if (!(sim_duration_s > 0.0)) throw ConfigError("sim_duration_s must be positive");
  if (early_slice_s < 0.0 || early_slice_s > sim_duration_s)
    throw ConfigError("early_slice_s must lie within the run");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (reward.r_survive < 0.0 || reward.w_cpu < 0.0 || reward.w_safe < 0.0)
    throw ConfigError("reward weights must be non-negative");
  if (!(reward.margin_band_c > 0.0)) throw ConfigError("reward.margin_band_c must be positive");
  if (!(reward.violation_penalty < 0.0))
    throw ConfigError("reward.violation_penalty must be negative");
  latency.build();
  if (const auto* g = std::get_if<GroundAmbient>(&ambient)) {
    if (!(g->day_length_s > 0.0)) throw ConfigError("ambient.day_length_s must be positive");
    if (g->conditioned_duration_s < 0.0)
      throw ConfigError("ambient.conditioned_duration_s must be non-negative");
    if (g->night_amplitude_c < 0.0)
      throw ConfigError("ambient.night_amplitude_c must be non-negative");
  } else {
    const auto& o = std::get<OrbitalAmbient>(ambient);
    if (!(o.period_s > 0.0)) throw ConfigError("ambient.period_s must be positive");
    if (!(o.sun_fraction > 0.0 && o.sun_fraction < 1.0))
      throw ConfigError("ambient.sun_fraction must be in (0, 1)");
    if (o.transition_width_s < 0.0 ||
        o.transition_width_s >= (1.0 - o.sun_fraction) * o.period_s ||
        o.transition_width_s >= o.sun_fraction * o.period_s)
      throw ConfigError("ambient.transition_width_s must fit inside both phases");
  }
}

ExperimentConfig default_config(RunMode mode, Environment env) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  cfg.environment = env;
  if (env == Environment::Ground) {
    cfg.sim_duration_s = 14400.0;
    cfg.ambient = GroundAmbient{};
    cfg.supervisor.window_duration_s = 3600.0;
    cfg.latency.kind = "fixed";
    cfg.latency.fixed_s = 0.0;
  } else {
    cfg.sim_duration_s = 16200.0;
    cfg.ambient = OrbitalAmbient{};
    cfg.supervisor.window_duration_s = 900.0;
    cfg.latency.kind = "empirical";
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }

  Section top(doc, "config");
  std::string mode_name = "agentic";
  std::string env_name = "ground";
  top.get("mode", mode_name);
  top.get("environment", env_name);
  auto mode = run_mode_from(mode_name);
  if (!mode) throw ConfigError("mode must be \"baseline\" or \"agentic\"");
  auto env = environment_from(env_name);
  if (!env) throw ConfigError("environment must be \"ground\" or \"orbit\"");

  ExperimentConfig cfg = default_config(*mode, *env);
  top.get("seed", cfg.seed);
  top.get("sim_duration_s", cfg.sim_duration_s);
  top.get("early_slice_s", cfg.early_slice_s);
  top.get("output_dir", cfg.output_dir);
  if (const json* node = top.child("thermal")) apply_thermal(*node, cfg.thermal);
  if (const json* node = top.child("ambient")) apply_ambient(*node, *env, cfg.ambient);
  if (const json* node = top.child("controller")) apply_controller(*node, cfg.controller);
  if (const json* node = top.child("reward")) apply_reward(*node, cfg.reward);
  if (const json* node = top.child("supervisor")) apply_supervisor(*node, cfg.supervisor);
  if (const json* node = top.child("latency")) apply_latency(*node, cfg.latency);
  top.finish();
  return cfg;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* v = std::getenv("THERMCTL_LLM_ENDPOINT")) cfg.supervisor.remote.endpoint = v;
  if (const char* v = std::getenv("THERMCTL_LLM_MODEL")) cfg.supervisor.remote.model = v;
  if (const char* v = std::getenv("THERMCTL_LLM_TIMEOUT_S")) {
    char* end = nullptr;
    double t = std::strtod(v, &end);
    if (end == v || *end != '\0' || !(t > 0.0))
      throw ConfigError("THERMCTL_LLM_TIMEOUT_S must be a positive number");
    cfg.supervisor.remote.timeout_s = t;
  }
}

}  // namespace thermctl
