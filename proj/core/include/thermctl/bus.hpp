#pragma once

// Message bus between the controller loop and the supervising agent.
//
// Both directions are simulated-time queues: a message enqueued at time t
// becomes pollable once the simulation clock reaches t + latency. Episode
// summaries travel upward with zero latency; recommendations travel back
// with latency drawn from a configurable model, so a slow supervisor answers
// about a window the controller has long since left behind.

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "thermctl/errors.hpp"
#include "thermctl/rng.hpp"
#include "thermctl/summary.hpp"

namespace thermctl {

template <typename T>
struct Envelope {
  T payload;
  double enqueued_at = 0.0;
  double visible_at = 0.0;
  std::uint64_t tag = 0;  ///< opaque correlation id, used for the event log
};

/// Thread-safe simulated-latency queue. poll returns the earliest-enqueued
/// envelope whose visible_at has passed; each envelope is delivered once.
template <typename T>
class SimQueue {
 public:
  void push(Envelope<T> env) {
    std::lock_guard lock(mu_);
    if (closed_) throw QueueClosedError("push on closed queue");
    q_.push_back(std::move(env));
  }

  std::optional<Envelope<T>> poll(double now) {
    std::lock_guard lock(mu_);
    for (auto it = q_.begin(); it != q_.end(); ++it) {
      if (it->visible_at <= now) {
        Envelope<T> env = std::move(*it);
        q_.erase(it);
        return env;
      }
    }
    return std::nullopt;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return q_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<Envelope<T>> q_;
  bool closed_ = false;
};

/// Delay distribution for supervisor replies, in simulated seconds.
class LatencyModel {
 public:
  static LatencyModel fixed(double seconds);
  static LatencyModel uniform(double lo_s, double hi_s);
  static LatencyModel empirical(std::vector<double> samples_s);

  /// Round-trip times observed querying a hosted language model, seconds.
  /// Default distribution for the empirical kind.
  static LatencyModel empirical_default();

  double sample(Rng& rng) const;
  const std::vector<double>& samples() const { return samples_; }
  std::string describe() const;

 private:
  enum class Kind { Fixed, Uniform, Empirical };
  LatencyModel(Kind kind, double lo, double hi, std::vector<double> samples);

  Kind kind_;
  double lo_ = 0.0, hi_ = 0.0;
  std::vector<double> samples_;
};

/// What the supervisor tells the controller to do with its entropy knob.
struct AlphaRecommendation {
  std::int64_t window_id = 0;
  double alpha = 0.2;
  // False only for a plain keep_alpha: the controller logs it and leaves the
  // entropy coefficient alone, so its own auto-tuning keeps running. Any tool
  // that names a value (including a keep-with-nudge) pins alpha instead.
  bool pin_alpha = true;
  std::string tool;    ///< increase_exploration, moderate_exploration, ...
  std::string source;  ///< rules | remote
  std::string rationale;
  double issued_at = 0.0;   ///< simulated s; filled by the bus on send
  double latency_s = 0.0;   ///< simulated transit delay; filled by the bus
};

struct BusEvent {
  std::string direction;     ///< to_supervisor | to_controller
  std::string payload_kind;  ///< episode_summary | alpha_recommendation
  std::int64_t ref_id = 0;   ///< episode id or window id
  double enqueued_at = 0.0;
  double visible_at = 0.0;
  std::optional<double> polled_at;
};

/// Pairs the two queues with one latency stream and an event log.
class AgentBus {
 public:
  AgentBus(LatencyModel recommendation_latency, std::uint64_t seed);

  void send_summary(const EpisodeSummary& summary, double now);
  std::optional<EpisodeSummary> poll_summary(double now);

  /// Visibility delayed by a fresh latency draw; stamps issued_at and
  /// latency_s on the payload and returns the drawn value.
  double send_recommendation(AlphaRecommendation rec, double now);

  /// Caller-supplied latency (remote-timeout fallback path).
  double send_recommendation_with_latency(AlphaRecommendation rec, double now, double latency_s);

  std::optional<AlphaRecommendation> poll_recommendation(double now);

  void close();
  const std::vector<BusEvent>& events() const { return events_; }
  const LatencyModel& recommendation_latency() const { return latency_; }

 private:
  LatencyModel latency_;
  Rng rng_;
  SimQueue<EpisodeSummary> summaries_;
  SimQueue<AlphaRecommendation> recommendations_;
  std::vector<BusEvent> events_;
  std::mutex events_mu_;
};

void write_bus_events(const std::string& path, const std::vector<BusEvent>& events);

}  // namespace thermctl
