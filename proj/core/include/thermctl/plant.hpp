#pragma once

// Lumped-parameter thermal model of a 16-core compute node.
//
// The die is split into one thermal node per sensor. Each node exchanges heat
// with ambient and with every other node:
//
//   C * dT_i/dt = P_i - (T_i - T_amb)/R_amb - sum_j (T_i - T_j)/R_inter
//
// integrated with explicit Euler at a fixed step dt. Cores map onto nodes in
// contiguous groups (core k -> node k / (total_cores / sensor_count)); a
// node's power is the sum of its cores' power. Per-core power is
//
//   P_core = 0                             when inactive
//   P_core = p_static + p_dyn * f^3 * load when active
//
// Core 0 is reserved for the orchestration layer and always runs active at
// f_max; commands may only address cores 1..total_cores-1.

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "thermctl/rng.hpp"

namespace thermctl {

struct ThermalConfig {
  double threshold_c = 60.0;   ///< critical limit; any sensor above it is a violation
  double near_band_c = 1.0;    ///< "near threshold" band width used by episode summaries
  double danger_floor_c = 59.0;  ///< floor of the danger zone; defaults to threshold - near_band
  int sensor_count = 4;
  double f_min_ghz = 1.0;
  double f_max_ghz = 2.0;
  int total_cores = 16;
  int managed_cores = 15;  ///< total_cores - 1; core 0 is reserved

  // Plant constants. The flight hardware's thermal mass and conductances are
  // not public; these values are chosen so that an aggressive schedule
  // overshoots the threshold within a few dozen steps while the brief
  // between-episode cooldown sheds only a couple of degrees. An undisciplined
  // policy therefore chains short hot-restart ejections, and the margin
  // between "productive" and "ejected" is what the controller has to learn.
  double node_capacitance = 40.0;      ///< J/degC per node
  double ambient_resistance = 2.2;     ///< degC/W, node to ambient
  double inter_node_resistance = 2.0;  ///< degC/W, each node pair
  double p_static_w = 0.5;             ///< W per active core
  double p_dyn_coeff = 2.5;            ///< W/GHz^3 at load 1.0
  double dt_s = 1.0;                   ///< simulated seconds per step
  double sensor_noise_c = 0.0;         ///< uniform read noise bound; 0 reads exact


  int cores_per_node() const { return total_cores / sensor_count; }

  /// Throws ConfigError when an invariant is broken (f_min < f_max,
  /// managed_cores = total_cores - 1, positive constants, Euler stability).
  void validate() const;
};

struct CoreState {
  int index = 0;
  bool active = false;
  double frequency_ghz = 0.0;  ///< meaningful only while active
  double load = 1.0;           ///< managed cores run pinned synthetic load
};

/// One per-step command for a managed core. Core 0 must never be addressed.
struct CoreCommand {
  int core_index = 0;
  bool active = false;
  double frequency_ghz = 0.0;
};

/// Lab profile: conditioned to a fixed temperature for part of the day,
/// free-running overnight with a sinusoidal swing around night_mean.
struct GroundAmbient {
  double conditioned_temp_c = 22.0;
  double conditioned_duration_s = 36000.0;  ///< 10 h of regulation per day
  double night_mean_c = 28.0;
  double night_amplitude_c = 6.0;
  double day_length_s = 86400.0;
};

/// Orbital profile: square wave between sun and eclipse temperature with a
/// 90-minute period, optional linear ramps of transition_width at the phase
/// boundaries (ramps start at the boundary and eat into the new phase).
struct OrbitalAmbient {
  double period_s = 5400.0;
  double sun_fraction = 0.5;
  double sun_temp_c = 45.0;
  double eclipse_temp_c = -10.0;
  double transition_width_s = 300.0;
};

using AmbientProfile = std::variant<GroundAmbient, OrbitalAmbient>;

struct PlantState {
  double sim_time_s = 0.0;
  std::vector<double> node_temps_c;  ///< one per sensor node
  std::vector<CoreState> cores;      ///< size total_cores, core 0 pinned
  Rng rng;                           ///< noise stream for sensor reads

  explicit PlantState(std::uint64_t noise_seed = 0) : rng(noise_seed) {}
};

using SensorReadings = std::vector<double>;

/// Ambient temperature at simulated time t >= 0. Total function, exact
/// period_s-periodicity for the orbital profile.
double ambient_at(const AmbientProfile& profile, double t);

/// Electrical power drawn by one core under the static + cubic model.
double core_power(const CoreState& core, const ThermalConfig& cfg);

/// Node power vector for a full core set.
std::vector<double> node_powers(std::span<const CoreState> cores, const ThermalConfig& cfg);

/// Fresh plant at t = 0, all nodes at ambient, managed cores parked inactive.
PlantState make_plant(const ThermalConfig& cfg, const AmbientProfile& profile,
                      std::uint64_t noise_seed);

/// Applies commands (managed cores only; ReservedCoreError on core 0), pins
/// core 0 to f_max, then advances one explicit-Euler step of the node network.
void step_plant(PlantState& state, std::span<const CoreCommand> commands,
                const AmbientProfile& profile, const ThermalConfig& cfg);

/// Node temperatures as seen by the sensors; adds bounded uniform noise from
/// the plant's RNG stream when sensor_noise_c > 0 (default exact).
SensorReadings read_sensors(PlantState& state, const ThermalConfig& cfg);

double peak_of(const SensorReadings& readings);

/// Closed-form steady state of the node network for constant node powers and
/// constant ambient: solves the linear balance instead of time-stepping.
std::vector<double> steady_state_temps(const std::vector<double>& node_power_w,
                                       double ambient_c, const ThermalConfig& cfg);

/// Slowest thermal time constant of the network (C * R_amb); the coupled
/// modes decay faster.
double slowest_time_constant(const ThermalConfig& cfg);

/// Frequency-scaled share of managed-core capacity in use: active cores
/// contribute f/f_max, inactive ones zero, normalized by managed_cores.
/// Core 0 entries in the span are skipped.
double cpu_utilization(std::span<const CoreState> cores, const ThermalConfig& cfg);

}  // namespace thermctl
