#include "thermctl/bus.hpp"

#include <stdexcept>
#include <utility>

#include "thermctl/csv.hpp"

namespace thermctl {

LatencyModel::LatencyModel(Kind kind, double lo, double hi, std::vector<double> samples)
    : kind_(kind), lo_(lo), hi_(hi), samples_(std::move(samples)) {}

LatencyModel LatencyModel::fixed(double seconds) {
  if (seconds < 0.0) throw ConfigError("fixed latency must be >= 0");
  return {Kind::Fixed, seconds, seconds, {}};
}

LatencyModel LatencyModel::uniform(double lo_s, double hi_s) {
  if (lo_s < 0.0 || hi_s < lo_s) throw ConfigError("uniform latency needs 0 <= lo <= hi");
  return {Kind::Uniform, lo_s, hi_s, {}};
}

LatencyModel LatencyModel::empirical(std::vector<double> samples_s) {
  if (samples_s.empty()) throw ConfigError("empirical latency needs at least one sample");
  for (double s : samples_s)
    if (!(s > 0.0)) throw ConfigError("latency samples must be positive");
  return {Kind::Empirical, 0.0, 0.0, std::move(samples_s)};
}

LatencyModel LatencyModel::empirical_default() {
  return empirical({142.16652, 503.93877, 67.04244, 45.08423, 158.52138, 150.72553, 133.59947,
                    182.3077, 223.62077, 319.04848, 234.8831, 260.19935, 461.65709});
}

double LatencyModel::sample(Rng& rng) const {
  switch (kind_) {
    case Kind::Fixed:
      return lo_;
    case Kind::Uniform:
      return rng.uniform(lo_, hi_);
    case Kind::Empirical:
      return samples_[static_cast<std::size_t>(rng.uniform_int(samples_.size()))];
  }
  throw std::logic_error("unreachable latency kind");
}

std::string LatencyModel::describe() const {
  switch (kind_) {
    case Kind::Fixed:
      return "fixed(" + format_double(lo_) + "s)";
    case Kind::Uniform:
      return "uniform(" + format_double(lo_) + "s, " + format_double(hi_) + "s)";
    case Kind::Empirical:
      return "empirical(" + std::to_string(samples_.size()) + " samples)";
  }
  return "?";
}

AgentBus::AgentBus(LatencyModel recommendation_latency, std::uint64_t seed)
    : latency_(std::move(recommendation_latency)), rng_(seed) {}

void AgentBus::send_summary(const EpisodeSummary& summary, double now) {
  Envelope<EpisodeSummary> env{summary, now, now, 0};
  {
    std::lock_guard lock(events_mu_);
    env.tag = events_.size();
    events_.push_back({"to_supervisor", "episode_summary", summary.episode_id, now, now, {}});
  }
  summaries_.push(std::move(env));
}

std::optional<EpisodeSummary> AgentBus::poll_summary(double now) {
  auto env = summaries_.poll(now);
  if (!env) return std::nullopt;
  {
    std::lock_guard lock(events_mu_);
    events_[env->tag].polled_at = now;
  }
  return std::move(env->payload);
}

double AgentBus::send_recommendation(AlphaRecommendation rec, double now) {
  return send_recommendation_with_latency(std::move(rec), now, latency_.sample(rng_));
}

double AgentBus::send_recommendation_with_latency(AlphaRecommendation rec, double now,
                                                  double latency_s) {
  if (latency_s < 0.0) throw ConfigError("recommendation latency must be >= 0");
  rec.issued_at = now;
  rec.latency_s = latency_s;
  Envelope<AlphaRecommendation> env{std::move(rec), now, now + latency_s, 0};
  {
    std::lock_guard lock(events_mu_);
    env.tag = events_.size();
    events_.push_back({"to_controller", "alpha_recommendation", env.payload.window_id, now,
                       now + latency_s, {}});
  }
  recommendations_.push(std::move(env));
  return latency_s;
}

std::optional<AlphaRecommendation> AgentBus::poll_recommendation(double now) {
  auto env = recommendations_.poll(now);
  if (!env) return std::nullopt;
  {
    std::lock_guard lock(events_mu_);
    events_[env->tag].polled_at = now;
  }
  return std::move(env->payload);
}

void AgentBus::close() {
  summaries_.close();
  recommendations_.close();
}

void write_bus_events(const std::string& path, const std::vector<BusEvent>& events) {
  CsvWriter csv(path, {"direction", "enqueued_at", "visible_at", "polled_at", "payload_kind",
                       "ref_id"});
  for (const BusEvent& ev : events) {
    csv.row({ev.direction, format_double(ev.enqueued_at), format_double(ev.visible_at),
             ev.polled_at ? format_double(*ev.polled_at) : "", ev.payload_kind,
             std::to_string(ev.ref_id)});
  }
  csv.flush();
}

}  // namespace thermctl
