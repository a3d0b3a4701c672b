#include "thermctl/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "thermctl/errors.hpp"

namespace thermctl {
namespace {

constexpr double kTanhEps = 1e-6;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

void SacConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");
  if (!(actor_lr > 0.0)) throw ConfigError("actor_lr must be positive");
  if (!(critic_lr > 0.0)) throw ConfigError("critic_lr must be positive");
  if (!(alpha_lr > 0.0)) throw ConfigError("alpha_lr must be positive");
  if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (buffer_capacity < batch_size) throw ConfigError("buffer_capacity must be >= batch_size");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (update_every < 1) throw ConfigError("update_every must be >= 1");
  if (max_episode_steps < 1) throw ConfigError("max_episode_steps must be >= 1");
  if (cooldown_s < 0.0) throw ConfigError("cooldown_s must be >= 0");
  if (!(log_std_min < log_std_max)) throw ConfigError("log_std_min must be < log_std_max");
}

std::string to_string(AlphaMode mode) {
  return mode == AlphaMode::AutoTune ? "autotune" : "override";
}

double compute_danger_ratio(const SensorReadings& readings, const ThermalConfig& cfg) {
  const double floor = 0.9 * cfg.threshold_c;
  int hot = 0;
  for (double t : readings)
    if (t >= floor) ++hot;
  return static_cast<double>(hot) / cfg.sensor_count;
}

int action_dim_for(const ThermalConfig& cfg, bool per_core) {
  return per_core ? cfg.managed_cores : 2;
}

int observation_dim(const ThermalConfig& cfg, bool per_core) {
  return cfg.sensor_count + 3 + action_dim_for(cfg, per_core);
}

Eigen::VectorXd build_observation(const SensorReadings& readings, double ambient_c,
                                  double utilization, const Eigen::VectorXd& prev_action,
                                  const ThermalConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(readings.size());
  Eigen::VectorXd obs(n + 3 + prev_action.size());
  for (Eigen::Index i = 0; i < n; ++i) obs[i] = readings[i] / cfg.threshold_c;
  obs[n] = compute_danger_ratio(readings, cfg);
  obs[n + 1] = ambient_c / cfg.threshold_c;
  obs[n + 2] = utilization;
  obs.tail(prev_action.size()) = prev_action;
  return obs;
}

RewardResult compute_reward(const SensorReadings& readings, double utilization,
                            const ThermalConfig& cfg, const RewardConfig& rcfg) {
  const double peak = peak_of(readings);
  if (peak > cfg.threshold_c) return {rcfg.violation_penalty, true};
  const double margin = std::clamp((cfg.threshold_c - peak) / rcfg.margin_band_c, 0.0, 1.0);
  return {rcfg.r_survive + rcfg.w_cpu * utilization + rcfg.w_safe * margin, false};
}

std::vector<CoreCommand> decode_action(const Eigen::VectorXd& raw, const ThermalConfig& cfg,
                                       bool per_core) {
  const int managed = cfg.managed_cores;
  const double span = cfg.f_max_ghz - cfg.f_min_ghz;
  if (raw.size() != action_dim_for(cfg, per_core))
    throw std::invalid_argument("raw action has wrong dimension");

  std::vector<CoreCommand> cmds(static_cast<std::size_t>(managed));
  if (per_core) {
    for (int i = 0; i < managed; ++i) {
      const double r = std::clamp(raw[i], -1.0, 1.0);
      cmds[i] = {i + 1, r >= 0.0, cfg.f_min_ghz + std::max(r, 0.0) * span};
    }
  } else {
    const double count_frac = std::clamp((raw[0] + 1.0) / 2.0, 0.0, 1.0);
    const int k = static_cast<int>(std::lround(count_frac * managed));
    const double freq_frac = std::clamp((raw[1] + 1.0) / 2.0, 0.0, 1.0);
    const double freq = cfg.f_min_ghz + freq_frac * span;
    for (int i = 0; i < managed; ++i) cmds[i] = {i + 1, i < k, freq};
  }
  return cmds;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (data_.size() < batch)
    throw EmptyBufferError("replay buffer holds " + std::to_string(data_.size()) +
                           " transitions, batch needs " + std::to_string(batch));
  std::vector<std::size_t> idx(batch);
  for (std::size_t i = 0; i < batch; ++i)
    idx[i] = static_cast<std::size_t>(rng.uniform_int(data_.size()));
  return idx;
}

SacAgent::SacAgent(int obs_dim, int action_dim, const SacConfig& cfg, std::uint64_t seed)
    : obs_dim_(obs_dim),
      action_dim_(action_dim),
      cfg_(cfg),
      target_entropy_(std::isnan(cfg.target_entropy) ? -static_cast<double>(action_dim)
                                                     : cfg.target_entropy),
      actor_({obs_dim, cfg.hidden_dim, cfg.hidden_dim, 2 * action_dim}),
      q1_({obs_dim + action_dim, cfg.hidden_dim, cfg.hidden_dim, 1}),
      q2_({obs_dim + action_dim, cfg.hidden_dim, cfg.hidden_dim, 1}),
      q1_target_({obs_dim + action_dim, cfg.hidden_dim, cfg.hidden_dim, 1}),
      q2_target_({obs_dim + action_dim, cfg.hidden_dim, cfg.hidden_dim, 1}),
      log_alpha_(std::log(cfg.alpha_init)),
      rng_(seed) {
  if (obs_dim < 1 || action_dim < 1) throw ConfigError("network dimensions must be positive");
  cfg_.validate();
  actor_.init_uniform(rng_);
  q1_.init_uniform(rng_);
  q2_.init_uniform(rng_);
  q1_target_.params() = q1_.params();
  q2_target_.params() = q2_.params();
  actor_opt_ = Adam(actor_.param_count(), cfg_.actor_lr);
  q1_opt_ = Adam(q1_.param_count(), cfg_.critic_lr);
  q2_opt_ = Adam(q2_.param_count(), cfg_.critic_lr);
  alpha_opt_ = Adam(1, cfg_.alpha_lr);
}

Eigen::VectorXd SacAgent::random_action() {
  Eigen::VectorXd a(action_dim_);
  for (int i = 0; i < action_dim_; ++i) a[i] = rng_.uniform(-1.0, 1.0);
  return a;
}

Eigen::VectorXd SacAgent::select_action(const Eigen::VectorXd& obs, bool deterministic) {
  Eigen::MatrixXd o = obs.transpose();
  if (deterministic) {
    Eigen::MatrixXd out = actor_.forward(o);
    return out.leftCols(action_dim_).row(0).transpose().array().tanh().matrix();
  }
  Eigen::MatrixXd eps(1, action_dim_);
  for (int i = 0; i < action_dim_; ++i) eps(0, i) = rng_.normal();
  PolicyEval pe = run_policy(o, eps);
  return pe.a.row(0).transpose();
}

void SacAgent::set_alpha(double value) {
  if (!(value > 0.0))
    throw NonPositiveAlphaError("alpha must be strictly positive, got " + std::to_string(value));
  log_alpha_ = std::log(value);
  mode_ = AlphaMode::Override;
}

SacAgent::PolicyEval SacAgent::run_policy(const Eigen::MatrixXd& obs,
                                          const Eigen::MatrixXd& eps) const {
  PolicyEval pe;
  Eigen::MatrixXd out = actor_.forward_cached(obs, pe.cache);
  pe.mu = out.leftCols(action_dim_);
  pe.log_std_raw = out.rightCols(action_dim_);
  pe.log_std = pe.log_std_raw.cwiseMax(cfg_.log_std_min).cwiseMin(cfg_.log_std_max);
  pe.sigma = pe.log_std.array().exp().matrix();
  Eigen::MatrixXd u = (pe.mu.array() + pe.sigma.array() * eps.array()).matrix();
  pe.a = u.array().tanh().matrix();
  Eigen::ArrayXXd per_dim = -0.5 * eps.array().square() - pe.log_std.array() - 0.5 * kLog2Pi -
                            (1.0 - pe.a.array().square() + kTanhEps).log();
  pe.logp = per_dim.rowwise().sum().matrix();
  return pe;
}

Eigen::VectorXd SacAgent::critic_targets(const SacBatch& batch) const {
  const Eigen::Index b = batch.next_obs.rows();
  PolicyEval pn = run_policy(batch.next_obs, batch.eps_next);
  Eigen::MatrixXd xn(b, obs_dim_ + action_dim_);
  xn << batch.next_obs, pn.a;
  Eigen::VectorXd q1t = q1_target_.forward(xn).col(0);
  Eigen::VectorXd q2t = q2_target_.forward(xn).col(0);
  const double alpha_v = std::exp(log_alpha_);
  return (batch.rew.array() +
          cfg_.gamma * (1.0 - batch.done.array()) *
              (q1t.cwiseMin(q2t).array() - alpha_v * pn.logp.array()))
      .matrix();
}

SacBatch SacAgent::make_batch(const ReplayBuffer& buffer) {
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  const std::vector<std::size_t> idx = buffer.sample_indices(b, rng_);

  SacBatch batch;
  batch.obs.resize(b, obs_dim_);
  batch.act.resize(b, action_dim_);
  batch.next_obs.resize(b, obs_dim_);
  batch.rew.resize(b);
  batch.done.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const Transition& t = buffer.at(idx[i]);
    batch.obs.row(i) = t.obs.transpose();
    batch.act.row(i) = t.action.transpose();
    batch.next_obs.row(i) = t.next_obs.transpose();
    batch.rew[i] = t.reward;
    batch.done[i] = t.done ? 1.0 : 0.0;
  }
  batch.eps_next.resize(b, action_dim_);
  for (std::size_t r = 0; r < b; ++r)
    for (int c = 0; c < action_dim_; ++c) batch.eps_next(r, c) = rng_.normal();
  batch.eps_cur.resize(b, action_dim_);
  for (std::size_t r = 0; r < b; ++r)
    for (int c = 0; c < action_dim_; ++c) batch.eps_cur(r, c) = rng_.normal();
  return batch;
}

double SacAgent::critic_loss_only(const SacBatch& batch) const {
  const Eigen::Index b = batch.obs.rows();
  const Eigen::VectorXd y = critic_targets(batch);
  Eigen::MatrixXd xc(b, obs_dim_ + action_dim_);
  xc << batch.obs, batch.act;
  const Eigen::VectorXd e1 = q1_.forward(xc).col(0) - y;
  const Eigen::VectorXd e2 = q2_.forward(xc).col(0) - y;
  return (e1.squaredNorm() + e2.squaredNorm()) / static_cast<double>(b);
}

double SacAgent::actor_loss_only(const SacBatch& batch) const {
  const Eigen::Index b = batch.obs.rows();
  const PolicyEval pe = run_policy(batch.obs, batch.eps_cur);
  Eigen::MatrixXd xa(b, obs_dim_ + action_dim_);
  xa << batch.obs, pe.a;
  const Eigen::VectorXd qa1 = q1_.forward(xa).col(0);
  const Eigen::VectorXd qa2 = q2_.forward(xa).col(0);
  return (std::exp(log_alpha_) * pe.logp - qa1.cwiseMin(qa2)).mean();
}

double SacAgent::alpha_loss_only(const SacBatch& batch) const {
  const PolicyEval pe = run_policy(batch.obs, batch.eps_cur);
  return -std::exp(log_alpha_) * (pe.logp.array() + target_entropy_).mean();
}

double SacAgent::compute_gradients(const SacBatch& batch, UpdateStats& stats) {
  const Eigen::Index b = batch.obs.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double alpha_v = std::exp(log_alpha_);

  q1_.zero_grad();
  q2_.zero_grad();
  actor_.zero_grad();

  // Critics: L = mean (q1 - y)^2 + mean (q2 - y)^2, targets detached.
  const Eigen::VectorXd y = critic_targets(batch);
  Eigen::MatrixXd xc(b, obs_dim_ + action_dim_);
  xc << batch.obs, batch.act;
  Mlp::Cache c1, c2;
  const Eigen::VectorXd e1 = q1_.forward_cached(xc, c1).col(0) - y;
  const Eigen::VectorXd e2 = q2_.forward_cached(xc, c2).col(0) - y;
  q1_.backward(c1, (2.0 * inv_b) * e1);
  q2_.backward(c2, (2.0 * inv_b) * e2);
  stats.critic_loss = 0.5 * (e1.squaredNorm() + e2.squaredNorm()) * inv_b;

  // Actor: L = mean(alpha * log pi - min Q(s, a)), a reparameterized.
  const PolicyEval pe = run_policy(batch.obs, batch.eps_cur);
  Eigen::MatrixXd xa(b, obs_dim_ + action_dim_);
  xa << batch.obs, pe.a;
  Mlp::Cache ca1, ca2;
  const Eigen::VectorXd qa1 = q1_.forward_cached(xa, ca1).col(0);
  const Eigen::VectorXd qa2 = q2_.forward_cached(xa, ca2).col(0);
  stats.actor_loss = (alpha_v * pe.logp - qa1.cwiseMin(qa2)).mean();

  // -min selects per sample which critic the gradient flows through;
  // critic parameter gradients stay untouched here.
  const Eigen::VectorXd pick1 = (qa1.array() <= qa2.array()).cast<double>().matrix();
  const Eigen::MatrixXd gx =
      q1_.input_gradient(ca1, (-inv_b) * pick1) +
      q2_.input_gradient(ca2, ((pick1.array() - 1.0) * inv_b).matrix());
  const Eigen::ArrayXXd dl_da_q = gx.rightCols(action_dim_).array();

  const Eigen::ArrayXXd a = pe.a.array();
  const Eigen::ArrayXXd one_m_a2 = 1.0 - a.square();
  const Eigen::ArrayXXd dl_da = alpha_v * inv_b * 2.0 * a / (one_m_a2 + kTanhEps) + dl_da_q;
  const Eigen::ArrayXXd g_u = dl_da * one_m_a2;
  // log pi depends on log_std directly (the -log_std term) and through
  // u = mu + exp(log_std) * eps; the hard clamp gates both paths.
  const Eigen::ArrayXXd in_range = ((pe.log_std_raw.array() > cfg_.log_std_min) &&
                                    (pe.log_std_raw.array() < cfg_.log_std_max))
                                       .cast<double>();
  const Eigen::ArrayXXd g_log_std =
      (-alpha_v * inv_b + g_u * pe.sigma.array() * batch.eps_cur.array()) * in_range;
  Eigen::MatrixXd dhead(b, 2 * action_dim_);
  dhead << g_u.matrix(), g_log_std.matrix();
  actor_.backward(pe.cache, dhead);

  // Alpha: L = -exp(log_alpha) * mean(log pi + target_entropy); its
  // derivative wrt log_alpha equals the loss value itself.
  stats.alpha_loss = -alpha_v * (pe.logp.array() + target_entropy_).mean();
  stats.alpha = alpha_v;
  stats.alpha_mode = mode_;
  return stats.alpha_loss;
}

UpdateStats SacAgent::update(const ReplayBuffer& buffer) {
  const SacBatch batch = make_batch(buffer);
  UpdateStats stats;
  const double g_log_alpha = compute_gradients(batch, stats);

  q1_opt_.step(q1_.params(), q1_.grads());
  q2_opt_.step(q2_.params(), q2_.grads());
  actor_opt_.step(actor_.params(), actor_.grads());
  if (mode_ == AlphaMode::AutoTune) {
    Eigen::VectorXd la(1), g(1);
    la[0] = log_alpha_;
    g[0] = g_log_alpha;
    alpha_opt_.step(la, g);
    log_alpha_ = la[0];
  }

  q1_target_.params() = (1.0 - cfg_.tau) * q1_target_.params() + cfg_.tau * q1_.params();
  q2_target_.params() = (1.0 - cfg_.tau) * q2_target_.params() + cfg_.tau * q2_.params();
  return stats;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ofstream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_vec(std::ofstream& out, const Eigen::VectorXd& v) {
  const auto n = static_cast<std::uint64_t>(v.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

double read_f64(std::ifstream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void read_vec(std::ifstream& in, Eigen::VectorXd& v) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (static_cast<Eigen::Index>(n) != v.size())
    throw std::runtime_error("checkpoint parameter block size mismatch");
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

constexpr char kMagic[4] = {'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void SacAgent::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(obs_dim_));
  write_u32(out, static_cast<std::uint32_t>(action_dim_));
  write_u32(out, static_cast<std::uint32_t>(cfg_.hidden_dim));
  write_f64(out, log_alpha_);
  write_u32(out, mode_ == AlphaMode::Override ? 1 : 0);
  write_vec(out, actor_.params());
  write_vec(out, q1_.params());
  write_vec(out, q2_.params());
  write_vec(out, q1_target_.params());
  write_vec(out, q2_target_.params());
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

void SacAgent::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  if (read_u32(in) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  if (read_u32(in) != static_cast<std::uint32_t>(obs_dim_) ||
      read_u32(in) != static_cast<std::uint32_t>(action_dim_) ||
      read_u32(in) != static_cast<std::uint32_t>(cfg_.hidden_dim))
    throw std::runtime_error("checkpoint shape mismatch: " + path.string());
  log_alpha_ = read_f64(in);
  mode_ = read_u32(in) == 1 ? AlphaMode::Override : AlphaMode::AutoTune;
  read_vec(in, actor_.params());
  read_vec(in, q1_.params());
  read_vec(in, q2_.params());
  read_vec(in, q1_target_.params());
  read_vec(in, q2_target_.params());
  if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
}

}  // namespace thermctl
