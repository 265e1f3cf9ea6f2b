#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "marconi/cost_model.hpp"
#include "marconi/policies.hpp"
#include "marconi/radix_cache.hpp"
#include "marconi/workload.hpp"

namespace marconi {

/// Analytical time-to-first-token proxy: unsaved prefill FLOPs at a fixed
/// device throughput plus a constant overhead.
struct PerfModel {
  double device_flops_per_s = 300e12;
  double fixed_overhead_ms = 10.0;

  bool operator==(const PerfModel&) const = default;
};

struct RequestOutcome {
  std::int64_t request_id = 0;
  std::int64_t session_id = 0;
  double arrival_ms = 0.0;
  std::int64_t input_len = 0;
  std::int64_t reuse_len = 0;
  FlopCount flops_saved;
  FlopCount flops_prefilled;
  double ttft_est_ms = 0.0;
  ByteCount evicted_bytes;
  ByteCount cache_bytes_after;
  bool admission_bypassed = false;

  double hit_rate() const {
    return input_len > 0 ? static_cast<double>(reuse_len) / static_cast<double>(input_len) : 0.0;
  }
};

struct AlphaEvent {
  std::size_t request_index = 0;  // requests processed when the tuner returned
  std::uint64_t timestamp = 0;    // tree clock at that point
  double old_alpha = 0.0;
  double new_alpha = 0.0;
  std::vector<std::pair<double, double>> grid_scores;  // (alpha, token hit rate)
};

struct ReplayMetrics {
  PolicyConfig policy;
  ByteCount capacity;
  std::vector<RequestOutcome> outcomes;
  double token_hit_rate = 0.0;
  FlopCount flops_saved_total;
  double ttft_p5 = 0.0;
  double ttft_p50 = 0.0;
  double ttft_p95 = 0.0;
  double alpha_final = 0.0;
  std::vector<AlphaEvent> alpha_events;
  std::size_t bypassed_requests = 0;
  std::vector<std::uint64_t> evicted_ordinals;
};

/// One replay's state: a tree, a policy and a byte budget. Requests are
/// processed atomically in the order they are passed in.
class CacheSimulator {
 public:
  CacheSimulator(const ModelConfig& model, const PolicyConfig& policy, ByteCount capacity, PerfModel perf = {});
  /// Continues from an existing tree, e.g. a tuner snapshot.
  CacheSimulator(RadixCache tree, const PolicyConfig& policy, ByteCount capacity, PerfModel perf = {});

  RequestOutcome process(const Request& request);

  /// Replaces the policy's eviction choice. Used to compare against
  /// reference implementations.
  void set_victim_selector(VictimSelector select) { selector_override_ = std::move(select); }

  const RadixCache& cache() const { return tree_; }
  const PolicyConfig& policy() const { return policy_; }
  ByteCount capacity() const { return capacity_; }
  double alpha() const { return alpha_; }
  const std::vector<AlphaEvent>& alpha_events() const { return alpha_events_; }
  const std::vector<std::uint64_t>& evicted_ordinals() const { return evicted_; }

 private:
  VictimSelector selector() const;
  void run_tuner();

  ModelConfig model_;
  PolicyConfig policy_;
  ByteCount capacity_;
  PerfModel perf_;
  RadixCache tree_;
  double alpha_ = 0.0;
  std::optional<VictimSelector> selector_override_;
  std::vector<std::uint64_t> evicted_;
  std::size_t processed_ = 0;

  // Tuner bookkeeping.
  bool tuner_started_ = false;
  bool tuner_done_ = false;
  std::optional<RadixCache> snapshot_;
  std::vector<Request> bootstrap_;
  std::size_t bootstrap_target_ = 0;
  std::vector<AlphaEvent> alpha_events_;
};

/// Aggregates per-request outcomes into ReplayMetrics.
ReplayMetrics summarize(std::vector<RequestOutcome> outcomes, const PolicyConfig& policy, ByteCount capacity);

ReplayMetrics replay(std::span<const Request> trace, const PolicyConfig& policy, const ModelConfig& model,
                     ByteCount capacity, PerfModel perf = {});

struct ReplayConfig {
  std::string label;
  PolicyConfig policy;
  ModelConfig model;
  ByteCount capacity;
  PerfModel perf;
};

struct SweepResult {
  std::string label;
  bool ok = false;
  std::string error;
  ReplayMetrics metrics;
};

/// Independent replays of one trace, up to `jobs` at a time (0 = hardware
/// concurrency). Results are in config order; a failing config does not
/// affect the others.
std::vector<SweepResult> sweep(std::span<const Request> trace, std::span<const ReplayConfig> configs, int jobs = 0);

struct AlphaTuneResult {
  double best_alpha = 0.0;
  std::vector<std::pair<double, double>> grid_scores;
};

/// Replays `bootstrap` from an independent copy of `snapshot` for every alpha
/// in the grid under the full Marconi policy and returns the alpha with the
/// highest token hit rate, smallest alpha on ties. An empty bootstrap keeps
/// `current_alpha`.
AlphaTuneResult tune_alpha(const RadixCache& snapshot, std::span<const Request> bootstrap,
                           std::span<const double> grid, const PolicyConfig& policy, ByteCount capacity,
                           double current_alpha);

/// Percentile by linear interpolation between closest ranks; 0 for empty input.
double percentile(std::vector<double> values, double p);

// Output formats.
void write_outcomes_csv(const ReplayMetrics& m, std::ostream& out);
/// Aggregate summary. The TTFT values are an analytical proxy.
nlohmann::json summary_json(const ReplayMetrics& m, const PerfModel& perf);

}  // namespace marconi
