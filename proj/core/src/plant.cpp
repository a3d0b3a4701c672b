#include "thermctl/plant.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "thermctl/errors.hpp"

namespace thermctl {

void ThermalConfig::validate() const {
  if (!(f_min_ghz < f_max_ghz)) throw ConfigError("plant: f_min must be < f_max");
  if (!(threshold_c > danger_floor_c)) throw ConfigError("plant: threshold must exceed danger_floor");
  if (!(near_band_c > 0.0)) throw ConfigError("plant: near_band must be positive");
  if (sensor_count < 1) throw ConfigError("plant: sensor_count must be >= 1");
  if (total_cores < 2) throw ConfigError("plant: total_cores must be >= 2");
  if (managed_cores != total_cores - 1)
    throw ConfigError("plant: managed_cores must equal total_cores - 1");
  if (total_cores % sensor_count != 0)
    throw ConfigError("plant: total_cores must be divisible by sensor_count");
  if (!(node_capacitance > 0.0) || !(ambient_resistance > 0.0) || !(inter_node_resistance > 0.0))
    throw ConfigError("plant: capacitance and resistances must be positive");
  if (!(p_static_w >= 0.0) || !(p_dyn_coeff >= 0.0))
    throw ConfigError("plant: power coefficients must be non-negative");
  if (!(dt_s > 0.0)) throw ConfigError("plant: dt must be positive");
  if (sensor_noise_c < 0.0) throw ConfigError("plant: sensor_noise must be non-negative");
  // Explicit Euler stays stable well below the fastest node time constant.
  const double g = 1.0 / ambient_resistance +
                   static_cast<double>(sensor_count - 1) / inter_node_resistance;
  const double tau_min = node_capacitance / g;
  if (!(dt_s < tau_min / 5.0))
    throw ConfigError("plant: dt too large for explicit Euler (needs dt < " +
                      std::to_string(tau_min / 5.0) + " s)");
}

double ambient_at(const AmbientProfile& profile, double t) {
  if (const auto* g = std::get_if<GroundAmbient>(&profile)) {
    const double phase = std::fmod(t, g->day_length_s);
    if (phase < g->conditioned_duration_s) return g->conditioned_temp_c;
    const double night_len = g->day_length_s - g->conditioned_duration_s;
    const double x = (phase - g->conditioned_duration_s) / night_len;
    // -cos so the night starts and ends at (mean - amplitude); with the
    // defaults that equals the conditioned temperature and the profile is
    // continuous across the boundary.
    return g->night_mean_c - g->night_amplitude_c * std::cos(2.0 * std::numbers::pi * x);
  }
  const auto& o = std::get<OrbitalAmbient>(profile);
  const double phase = std::fmod(t, o.period_s);
  const double sun_len = o.sun_fraction * o.period_s;
  const double tw = o.transition_width_s;
  if (phase < tw) {
    // eclipse -> sun ramp at the period boundary
    return o.eclipse_temp_c + (o.sun_temp_c - o.eclipse_temp_c) * (phase / tw);
  }
  if (phase < sun_len) return o.sun_temp_c;
  if (phase < sun_len + tw) {
    return o.sun_temp_c + (o.eclipse_temp_c - o.sun_temp_c) * ((phase - sun_len) / tw);
  }
  return o.eclipse_temp_c;
}

double core_power(const CoreState& core, const ThermalConfig& cfg) {
  if (!core.active) return 0.0;
  const double f = core.frequency_ghz;
  return cfg.p_static_w + cfg.p_dyn_coeff * f * f * f * core.load;
}

std::vector<double> node_powers(std::span<const CoreState> cores, const ThermalConfig& cfg) {
  std::vector<double> p(static_cast<std::size_t>(cfg.sensor_count), 0.0);
  const int per_node = cfg.cores_per_node();
  for (const auto& core : cores) {
    const int node = core.index / per_node;
    p[static_cast<std::size_t>(node)] += core_power(core, cfg);
  }
  return p;
}

PlantState make_plant(const ThermalConfig& cfg, const AmbientProfile& profile,
                      std::uint64_t noise_seed) {
  cfg.validate();
  PlantState s(noise_seed);
  s.sim_time_s = 0.0;
  s.node_temps_c.assign(static_cast<std::size_t>(cfg.sensor_count), ambient_at(profile, 0.0));
  s.cores.resize(static_cast<std::size_t>(cfg.total_cores));
  for (int i = 0; i < cfg.total_cores; ++i) {
    s.cores[static_cast<std::size_t>(i)] =
        CoreState{i, i == 0, i == 0 ? cfg.f_max_ghz : 0.0, 1.0};
  }
  return s;
}

void step_plant(PlantState& state, std::span<const CoreCommand> commands,
                const AmbientProfile& profile, const ThermalConfig& cfg) {
  for (const auto& cmd : commands) {
    if (cmd.core_index == 0)
      throw ReservedCoreError("core 0 is reserved and cannot be commanded");
    if (cmd.core_index < 0 || cmd.core_index >= cfg.total_cores)
      throw std::out_of_range("core command index out of range: " +
                              std::to_string(cmd.core_index));
    auto& core = state.cores[static_cast<std::size_t>(cmd.core_index)];
    core.active = cmd.active;
    core.frequency_ghz =
        cmd.active ? std::clamp(cmd.frequency_ghz, cfg.f_min_ghz, cfg.f_max_ghz) : 0.0;
    core.load = 1.0;
  }
  // Core 0 is pinned regardless of the state the caller constructed.
  state.cores[0].active = true;
  state.cores[0].frequency_ghz = cfg.f_max_ghz;
  state.cores[0].load = 1.0;

  const std::vector<double> power = node_powers(state.cores, cfg);
  const double t_amb = ambient_at(profile, state.sim_time_s);
  const int n = cfg.sensor_count;
  std::vector<double> next(state.node_temps_c);
  for (int i = 0; i < n; ++i) {
    const double ti = state.node_temps_c[static_cast<std::size_t>(i)];
    double flux = power[static_cast<std::size_t>(i)] - (ti - t_amb) / cfg.ambient_resistance;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      flux -= (ti - state.node_temps_c[static_cast<std::size_t>(j)]) / cfg.inter_node_resistance;
    }
    next[static_cast<std::size_t>(i)] = ti + cfg.dt_s * flux / cfg.node_capacitance;
  }
  state.node_temps_c = std::move(next);
  state.sim_time_s += cfg.dt_s;
}

SensorReadings read_sensors(PlantState& state, const ThermalConfig& cfg) {
  SensorReadings r = state.node_temps_c;
  if (cfg.sensor_noise_c > 0.0) {
    for (auto& v : r) v += state.rng.uniform(-cfg.sensor_noise_c, cfg.sensor_noise_c);
  }
  return r;
}

double peak_of(const SensorReadings& readings) {
  return *std::max_element(readings.begin(), readings.end());
}

std::vector<double> steady_state_temps(const std::vector<double>& node_power_w,
                                       double ambient_c, const ThermalConfig& cfg) {
  const int n = cfg.sensor_count;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = 1.0 / cfg.ambient_resistance +
              static_cast<double>(n - 1) / cfg.inter_node_resistance;
    for (int j = 0; j < n; ++j)
      if (j != i) a(i, j) = -1.0 / cfg.inter_node_resistance;
    b(i) = node_power_w[static_cast<std::size_t>(i)] + ambient_c / cfg.ambient_resistance;
  }
  const Eigen::VectorXd t = a.partialPivLu().solve(b);
  return std::vector<double>(t.data(), t.data() + n);
}

double slowest_time_constant(const ThermalConfig& cfg) {
  return cfg.node_capacitance * cfg.ambient_resistance;
}

double cpu_utilization(std::span<const CoreState> cores, const ThermalConfig& cfg) {
  double sum = 0.0;
  for (const auto& core : cores) {
    if (core.index == 0) continue;
    if (core.active) sum += core.frequency_ghz / cfg.f_max_ghz;
  }
  return sum / static_cast<double>(cfg.managed_cores);
}

}  // namespace thermctl
