#pragma once

// Soft actor-critic controller over the thermal plant.
//
// Policy is a squashed Gaussian: a = tanh(mu + sigma * eps) with per-dim
// log-density
//
//   log pi(a) = sum_i [ -eps_i^2/2 - log_std_i - log(2*pi)/2
//                       - log(1 - a_i^2 + 1e-6) ]
//
// Twin critics with Polyak-averaged targets; targets
//
//   y = r + gamma * (1 - done) * (min(Q1', Q2')(s', a') - alpha * log pi(a'|s'))
//
// The entropy coefficient alpha is trained on log-alpha while in AutoTune
// mode; a supervisor override freezes it. All gradients are analytic and
// flow through the same code the finite-difference checks evaluate.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "thermctl/net.hpp"
#include "thermctl/plant.hpp"
#include "thermctl/rng.hpp"

namespace thermctl {

struct SacConfig {
  int hidden_dim = 64;  ///< width of both hidden layers in every net
  double gamma = 0.99;
  double tau = 0.005;  ///< Polyak factor for the target critics
  double actor_lr = 3e-4;
  // The critic deliberately trails the actor. A value function that is still
  // vague about the thermal cliff for the first few simulated hours is what
  // gives the entropy coefficient room to matter: low alpha exploits the
  // vague estimate straight into ejections, high alpha hedges around it.
  double critic_lr = 1e-4;
  double alpha_lr = 3e-4;
  double alpha_init = 0.2;
  double target_entropy = std::numeric_limits<double>::quiet_NaN();  ///< NaN -> -action_dim
  int batch_size = 64;
  int buffer_capacity = 100000;
  int warmup_steps = 500;   ///< steps with uniform random actions before the policy acts
  int update_every = 1;     ///< gradient step every n environment steps
  int max_episode_steps = 150;  ///< timeout termination (not a failure)
  double cooldown_s = 10.0;      ///< managed cores parked between episodes
  bool per_core_actions = false;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  void validate() const;  ///< ConfigError on broken invariants
};

struct RewardConfig {
  double r_survive = 0.1;
  double w_cpu = 1.0;
  double w_safe = 0.3;
  double margin_band_c = 5.0;  ///< safety bonus ramps over [threshold - band, threshold]
  double violation_penalty = -10.0;
};

struct RewardResult {
  double reward = 0.0;
  bool violation = false;
};

enum class AlphaMode { AutoTune, Override };

std::string to_string(AlphaMode mode);

/// Fraction of sensors reading at or above 0.9 * threshold.
double compute_danger_ratio(const SensorReadings& readings, const ThermalConfig& cfg);

/// Dimension of the raw action vector: 2 aggregate knobs (core count,
/// shared frequency) or one knob per managed core.
int action_dim_for(const ThermalConfig& cfg, bool per_core);

/// Observation layout: sensor temps / threshold, danger ratio,
/// ambient / threshold, utilization, previous raw action.
Eigen::VectorXd build_observation(const SensorReadings& readings, double ambient_c,
                                  double utilization, const Eigen::VectorXd& prev_action,
                                  const ThermalConfig& cfg);

int observation_dim(const ThermalConfig& cfg, bool per_core);

/// Any sensor above threshold terminates with the flat penalty; otherwise
/// survival + weighted utilization + safety-margin bonus.
RewardResult compute_reward(const SensorReadings& readings, double utilization,
                            const ThermalConfig& cfg, const RewardConfig& rcfg);

/// Maps a raw action in [-1,1]^d onto commands for cores 1..total-1.
/// Aggregate: dim 0 picks how many managed cores run, dim 1 their shared
/// frequency. Per-core: sign gates the core, magnitude above zero sets f.
std::vector<CoreCommand> decode_action(const Eigen::VectorXd& raw, const ThermalConfig& cfg,
                                       bool per_core);

struct Transition {
  Eigen::VectorXd obs;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_obs;
  bool done = false;  ///< true only for violations; timeouts bootstrap
};

/// Fixed-capacity ring buffer of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  /// Uniform with replacement; EmptyBufferError when fewer than batch held.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

/// One minibatch plus the frozen Gaussian noise both policy evaluations use.
/// Holding the noise makes every loss below a deterministic function of the
/// parameters, which is what the finite-difference checks require.
struct SacBatch {
  Eigen::MatrixXd obs, act, next_obs;  ///< rows are samples
  Eigen::VectorXd rew, done;
  Eigen::MatrixXd eps_next, eps_cur;
};

struct UpdateStats {
  double critic_loss = 0.0;  ///< mean of the two critic MSEs
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  AlphaMode alpha_mode = AlphaMode::AutoTune;
};

class SacAgent {
 public:
  SacAgent(int obs_dim, int action_dim, const SacConfig& cfg, std::uint64_t seed);

  /// Uniform [-1,1]^d exploration action for the warmup phase.
  Eigen::VectorXd random_action();

  /// Policy action; stochastic draws consume action_dim normals from the
  /// controller stream, deterministic mode consumes nothing.
  Eigen::VectorXd select_action(const Eigen::VectorXd& obs, bool deterministic = false);

  /// One gradient step on critics, actor and (in AutoTune) log-alpha from a
  /// fresh minibatch, then a Polyak update of the targets.
  UpdateStats update(const ReplayBuffer& buffer);

  double alpha() const { return std::exp(log_alpha_); }
  AlphaMode alpha_mode() const { return mode_; }

  /// Supervisor override: pins alpha and stops the auto-tuner.
  /// NonPositiveAlphaError unless value > 0.
  void set_alpha(double value);

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }
  const SacConfig& config() const { return cfg_; }
  double target_entropy() const { return target_entropy_; }

  // Internals exposed for checkpoint round-trip tests and the
  // finite-difference gradient checks.
  Mlp& actor() { return actor_; }
  Mlp& critic1() { return q1_; }
  Mlp& critic2() { return q2_; }
  Mlp& target1() { return q1_target_; }
  Mlp& target2() { return q2_target_; }
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha_raw(double v) { log_alpha_ = v; }  ///< keeps the mode

  /// Draws indices and noise from the controller stream.
  SacBatch make_batch(const ReplayBuffer& buffer);

  // Deterministic scalar losses over a fixed batch, evaluated from current
  // parameters with no side effects. Their analytic gradients are produced
  // by compute_gradients below; update() runs the same path.
  double critic_loss_only(const SacBatch& batch) const;  ///< sum of both MSEs
  double actor_loss_only(const SacBatch& batch) const;
  double alpha_loss_only(const SacBatch& batch) const;

  /// Accumulates analytic gradients of the three losses into the nets'
  /// gradient vectors (zeroed first) and returns d alpha_loss / d log_alpha.
  double compute_gradients(const SacBatch& batch, UpdateStats& stats);

 private:
  struct PolicyEval {
    Mlp::Cache cache;
    Eigen::MatrixXd mu, log_std_raw, log_std, sigma, a;
    Eigen::VectorXd logp;
  };

  PolicyEval run_policy(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& eps) const;
  Eigen::VectorXd critic_targets(const SacBatch& batch) const;

  int obs_dim_;
  int action_dim_;
  SacConfig cfg_;
  double target_entropy_;
  Mlp actor_, q1_, q2_, q1_target_, q2_target_;
  Adam actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  double log_alpha_;
  AlphaMode mode_ = AlphaMode::AutoTune;
  Rng rng_;
};

}  // namespace thermctl
