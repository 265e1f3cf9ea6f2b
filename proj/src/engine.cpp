#include "marconi/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace marconi {

namespace {

std::int64_t kv_granularity(const PolicyConfig& policy) {
  return policy.kind == PolicyKind::vllm_plus ? policy.block_size : 1;
}

}  // namespace

CacheSimulator::CacheSimulator(const ModelConfig& model, const PolicyConfig& policy, ByteCount capacity,
                               PerfModel perf)
    : CacheSimulator(RadixCache(model, kv_granularity(policy)), policy, capacity, perf) {}

CacheSimulator::CacheSimulator(RadixCache tree, const PolicyConfig& policy, ByteCount capacity, PerfModel perf)
    : model_(tree.model()),
      policy_(policy),
      capacity_(capacity),
      perf_(perf),
      tree_(std::move(tree)),
      alpha_(policy.alpha) {
  policy_.validate();
  if (capacity_.value <= 0) throw std::invalid_argument("CacheSimulator: capacity must be > 0");
  if (!(perf_.device_flops_per_s > 0.0)) throw std::invalid_argument("CacheSimulator: device_flops_per_s must be > 0");
  if (tree_.kv_block_tokens() != kv_granularity(policy_)) {
    throw std::invalid_argument("CacheSimulator: tree KV granularity does not match the policy");
  }
}

VictimSelector CacheSimulator::selector() const {
  if (selector_override_) return *selector_override_;
  if (policy_.kind == PolicyKind::marconi) return flop_aware_selector(alpha_);
  return lru_selector();
}

RequestOutcome CacheSimulator::process(const Request& request) {
  RequestOutcome o;
  o.request_id = request.request_id;
  o.session_id = request.session_id;
  o.arrival_ms = request.arrival_ms;
  o.input_len = request.input_len();

  if (policy_.kind != PolicyKind::no_cache) {
    const std::vector<Token> sequence = request.full_sequence();
    const LookupResult hit = tree_.match(request.input_tokens);
    std::int64_t reuse = hit.reuse_len;
    if (policy_.kind == PolicyKind::vllm_plus && model_.n_ssm_layers == 0) {
      // KV-only block reuse covers whole blocks.
      reuse = reuse / policy_.block_size * policy_.block_size;
    }
    const AdmissionPlan plan = policy_.kind == PolicyKind::vllm_plus
                                   ? plan_admission_vllm_plus(request, policy_, reuse)
                                   : plan_admission_marconi(request, tree_, policy_, reuse);
    const std::vector<CheckpointRequest> checkpoints = plan.checkpoints();
    const ByteCount cost = tree_.insert_cost(sequence, checkpoints);

    const bool tuning = policy_.kind == PolicyKind::marconi && policy_.tuner.enabled && !selector_override_;
    if (tuning && !tuner_started_ && tree_.total_bytes() + cost > capacity_) {
      tuner_started_ = true;
      snapshot_ = tree_;
      const double window = policy_.tuner.bootstrap_multiplier * static_cast<double>(std::max<std::size_t>(processed_, 1));
      bootstrap_target_ = static_cast<std::size_t>(std::llround(window));
    }
    if (tuner_started_ && !tuner_done_) bootstrap_.push_back(request);

    if (hit.reused_node) tree_.touch(*hit.reused_node, tree_.next_timestamp());
    const std::vector<NodeId> pinned = tree_.pin_path(sequence);
    const EvictionResult ev = evict_until(tree_, cost, capacity_, selector());
    evicted_.insert(evicted_.end(), ev.evicted.begin(), ev.evicted.end());
    o.evicted_bytes = ev.freed;
    if (ev.fits) {
      const ByteCount added = tree_.insert(sequence, checkpoints);
      if (added != cost) throw std::logic_error("CacheSimulator: admission cost estimate drifted");
    } else {
      o.admission_bypassed = true;
    }
    tree_.unpin(pinned);
    if (tree_.total_bytes() > capacity_) throw std::logic_error("CacheSimulator: capacity exceeded");
    o.reuse_len = reuse;
  }

  o.flops_saved = model_prefill_flops(o.reuse_len, model_);
  o.flops_prefilled = delta_prefill_flops(o.reuse_len, o.input_len, model_);
  o.ttft_est_ms = perf_.fixed_overhead_ms + o.flops_prefilled.value / perf_.device_flops_per_s * 1000.0;
  o.cache_bytes_after = tree_.total_bytes();
  ++processed_;

  if (tuner_started_ && !tuner_done_ && bootstrap_.size() >= bootstrap_target_) run_tuner();
  return o;
}

void CacheSimulator::run_tuner() {
  const AlphaTuneResult r =
      tune_alpha(*snapshot_, bootstrap_, policy_.tuner.alpha_grid, policy_, capacity_, alpha_);
  AlphaEvent e;
  e.request_index = processed_;
  e.timestamp = tree_.clock();
  e.old_alpha = alpha_;
  e.new_alpha = r.best_alpha;
  e.grid_scores = r.grid_scores;
  alpha_events_.push_back(std::move(e));
  alpha_ = r.best_alpha;
  tuner_done_ = true;
  snapshot_.reset();
  bootstrap_.clear();
  bootstrap_.shrink_to_fit();
}

AlphaTuneResult tune_alpha(const RadixCache& snapshot, std::span<const Request> bootstrap,
                           std::span<const double> grid, const PolicyConfig& policy, ByteCount capacity,
                           double current_alpha) {
  AlphaTuneResult result;
  result.best_alpha = current_alpha;
  if (bootstrap.empty() || grid.empty()) return result;

  std::int64_t input_total = 0;
  for (const auto& r : bootstrap) input_total += r.input_len();

  std::vector<std::int64_t> reused(grid.size(), 0);
  auto run_one = [&](std::size_t i) {
    PolicyConfig p = policy;
    p.kind = PolicyKind::marconi;
    p.alpha = grid[i];
    p.tuner.enabled = false;
    CacheSimulator sim(snapshot, p, capacity);
    std::int64_t sum = 0;
    for (const auto& r : bootstrap) sum += sim.process(r).reuse_len;
    reused[i] = sum;
  };

  unsigned workers = policy.tuner.parallel_replays > 0 ? static_cast<unsigned>(policy.tuner.parallel_replays)
                                                       : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(grid.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(grid.size());
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
          try {
            run_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    pool.clear();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double rate = input_total > 0 ? static_cast<double>(reused[i]) / static_cast<double>(input_total) : 0.0;
    result.grid_scores.emplace_back(grid[i], rate);
    if (!best || reused[i] > reused[*best] || (reused[i] == reused[*best] && grid[i] < grid[*best])) best = i;
  }
  result.best_alpha = grid[*best];
  return result;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

ReplayMetrics summarize(std::vector<RequestOutcome> outcomes, const PolicyConfig& policy, ByteCount capacity) {
  ReplayMetrics m;
  m.policy = policy;
  m.capacity = capacity;
  m.alpha_final = policy.alpha;
  std::int64_t reused = 0;
  std::int64_t inputs = 0;
  std::vector<double> ttft;
  ttft.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    reused += o.reuse_len;
    inputs += o.input_len;
    m.flops_saved_total += o.flops_saved;
    ttft.push_back(o.ttft_est_ms);
    if (o.admission_bypassed) ++m.bypassed_requests;
  }
  m.token_hit_rate = inputs > 0 ? static_cast<double>(reused) / static_cast<double>(inputs) : 0.0;
  m.ttft_p5 = percentile(ttft, 5.0);
  m.ttft_p50 = percentile(ttft, 50.0);
  m.ttft_p95 = percentile(std::move(ttft), 95.0);
  m.outcomes = std::move(outcomes);
  return m;
}

ReplayMetrics replay(std::span<const Request> trace, const PolicyConfig& policy, const ModelConfig& model,
                     ByteCount capacity, PerfModel perf) {
  CacheSimulator sim(model, policy, capacity, perf);
  std::vector<RequestOutcome> outcomes;
  outcomes.reserve(trace.size());
  for (const auto& r : trace) outcomes.push_back(sim.process(r));
  ReplayMetrics m = summarize(std::move(outcomes), policy, capacity);
  m.alpha_final = sim.alpha();
  m.alpha_events = sim.alpha_events();
  m.evicted_ordinals = sim.evicted_ordinals();
  return m;
}

std::vector<SweepResult> sweep(std::span<const Request> trace, std::span<const ReplayConfig> configs, int jobs) {
  std::vector<SweepResult> results(configs.size());
  auto run_one = [&](std::size_t i) {
    results[i].label = configs[i].label;
    try {
      configs[i].model.validate();
      results[i].metrics = replay(trace, configs[i].policy, configs[i].model, configs[i].capacity, configs[i].perf);
      results[i].ok = true;
    } catch (const std::exception& e) {
      results[i].ok = false;
      results[i].error = e.what();
    }
  };
  unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(configs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) run_one(i);
      });
    }
  }
  return results;
}

void write_outcomes_csv(const ReplayMetrics& m, std::ostream& out) {
  out << "request_id,session_id,arrival_ms,input_len,reuse_len,hit_rate,flops_saved,ttft_est_ms,cache_bytes_after\n";
  const auto old_flags = out.flags();
  const auto old_prec = out.precision();
  out << std::setprecision(17);
  for (const auto& o : m.outcomes) {
    out << o.request_id << ',' << o.session_id << ',' << o.arrival_ms << ',' << o.input_len << ',' << o.reuse_len
        << ',' << o.hit_rate() << ',' << o.flops_saved.value << ',' << o.ttft_est_ms << ','
        << o.cache_bytes_after.value << '\n';
  }
  out.flags(old_flags);
  out.precision(old_prec);
}

nlohmann::json summary_json(const ReplayMetrics& m, const PerfModel& perf) {
  nlohmann::json j;
  j["policy"] = std::string(to_string(m.policy.kind));
  j["capacity"] = m.capacity.value;
  j["token_hit_rate"] = m.token_hit_rate;
  j["flop_saved_total"] = m.flops_saved_total.value;
  j["ttft_p5"] = m.ttft_p5;
  j["ttft_p50"] = m.ttft_p50;
  j["ttft_p95"] = m.ttft_p95;
  j["alpha_final"] = m.alpha_final;
  j["ttft_model"] = {{"kind", "analytical_proxy"},
                     {"device_flops_per_s", perf.device_flops_per_s},
                     {"fixed_overhead_ms", perf.fixed_overhead_ms}};
  j["n_requests"] = m.outcomes.size();
  j["bypassed_requests"] = m.bypassed_requests;
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : m.alpha_events) {
    nlohmann::json ev;
    ev["request_index"] = e.request_index;
    ev["timestamp"] = e.timestamp;
    ev["old_alpha"] = e.old_alpha;
    ev["new_alpha"] = e.new_alpha;
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& [a, s] : e.grid_scores) grid.push_back({{"alpha", a}, {"token_hit_rate", s}});
    ev["grid_scores"] = std::move(grid);
    events.push_back(std::move(ev));
  }
  j["alpha_events"] = std::move(events);
  return j;
}

}  // namespace marconi
