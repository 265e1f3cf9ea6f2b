#include "marconi/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace marconi {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::marconi: return "marconi";
    case PolicyKind::sglang_plus: return "sglang_plus";
    case PolicyKind::vllm_plus: return "vllm_plus";
    case PolicyKind::no_cache: return "no_cache";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "marconi") return PolicyKind::marconi;
  if (name == "sglang_plus") return PolicyKind::sglang_plus;
  if (name == "vllm_plus") return PolicyKind::vllm_plus;
  if (name == "no_cache") return PolicyKind::no_cache;
  throw std::invalid_argument("unknown policy '" + std::string(name) + "'");
}

void PolicyConfig::validate() const {
  if (block_size < 1) throw std::invalid_argument("PolicyConfig: block_size must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("PolicyConfig: alpha must be >= 0");
  if (!(tuner.bootstrap_multiplier >= 5.0 && tuner.bootstrap_multiplier <= 15.0)) {
    throw std::invalid_argument("PolicyConfig: bootstrap_multiplier must be in [5, 15]");
  }
  if (tuner.alpha_grid.empty() ||
      std::find(tuner.alpha_grid.begin(), tuner.alpha_grid.end(), 0.0) == tuner.alpha_grid.end()) {
    throw std::invalid_argument("PolicyConfig: alpha_grid must contain 0");
  }
  for (double a : tuner.alpha_grid) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("PolicyConfig: alpha_grid values must be >= 0");
  }
  if (tuner.parallel_replays < 0) throw std::invalid_argument("PolicyConfig: parallel_replays must be >= 0");
}

std::vector<CheckpointRequest> AdmissionPlan::checkpoints() const {
  std::vector<CheckpointRequest> out = prefill_checkpoints;
  if (final_checkpoint > 0) {
    const auto fin = CheckpointRequest::at(final_checkpoint);
    if (std::find(out.begin(), out.end(), fin) == out.end()) out.push_back(fin);
  }
  return out;
}

AdmissionPlan plan_admission_marconi(const Request& request, const RadixCache& tree, const PolicyConfig& policy,
                                     std::int64_t reuse_len) {
  AdmissionPlan plan;
  plan.final_checkpoint = request.total_len();
  const SpeculationOutcome spec = tree.speculative_insert(request.input_tokens);
  if (!spec.needs_checkpoint()) return plan;

  std::int64_t state_pos = spec.branch_pos;
  if (policy.chunk_align) {
    const std::int64_t chunk = tree.model().chunk_size;
    state_pos = (state_pos / chunk) * chunk;
  }
  if (state_pos > 0 && state_pos > reuse_len) {
    plan.prefill_checkpoints.push_back({spec.branch_pos, state_pos});
  }
  return plan;
}

AdmissionPlan plan_admission_vllm_plus(const Request& request, const PolicyConfig& policy, std::int64_t reuse_len) {
  AdmissionPlan plan;
  const std::int64_t end = request.total_len();
  plan.final_checkpoint = end;
  for (std::int64_t b = policy.block_size; b <= end; b += policy.block_size) {
    if (b > reuse_len) plan.prefill_checkpoints.push_back(CheckpointRequest::at(b));
  }
  return plan;
}

std::optional<double> node_flop_efficiency(const RadixCache& tree, NodeId id) {
  const RadixNode& n = tree.node(id);
  const ByteCount bytes = n.state_bytes();
  if (bytes.value <= 0) return std::nullopt;
  const std::int64_t parent_end = tree.node(n.parent).depth_end;
  return flop_efficiency(delta_prefill_flops(parent_end, n.depth_end, tree.model()), bytes);
}

std::vector<EvictionScore> score_candidates(const RadixCache& tree, double alpha) {
  const std::vector<NodeId> live = tree.live_nodes();
  if (live.empty()) return {};

  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -t_min;
  double e_min = t_min;
  double e_max = -t_min;
  std::vector<std::optional<double>> eff(live.size());
  for (std::size_t i = 0; i < live.size(); ++i) {
    const double t = static_cast<double>(tree.node(live[i]).last_access);
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
    eff[i] = node_flop_efficiency(tree, live[i]);
    if (eff[i]) {
      e_min = std::min(e_min, *eff[i]);
      e_max = std::max(e_max, *eff[i]);
    }
  }

  std::vector<EvictionScore> scores;
  std::size_t i = 0;
  for (NodeId id : tree.evict_candidates()) {
    while (live[i] != id) ++i;  // both lists are in id order
    EvictionScore s;
    s.node = id;
    const double t = static_cast<double>(tree.node(id).last_access);
    s.recency_norm = t_max > t_min ? (t - t_min) / (t_max - t_min) : 0.5;
    if (!eff[i]) {
      s.flop_eff_norm = 1.0;
    } else {
      s.flop_eff_norm = e_max > e_min ? (*eff[i] - e_min) / (e_max - e_min) : 0.5;
    }
    s.utility = s.recency_norm + alpha * s.flop_eff_norm;
    scores.push_back(s);
  }
  return scores;
}

VictimSelector flop_aware_selector(double alpha) {
  return [alpha](const RadixCache& tree) -> std::optional<NodeId> {
    const auto scores = score_candidates(tree, alpha);
    if (scores.empty()) return std::nullopt;
    auto key = [&tree](const EvictionScore& s) {
      const RadixNode& n = tree.node(s.node);
      return std::make_tuple(s.utility, n.last_access, n.ordinal);
    };
    const auto best = std::min_element(scores.begin(), scores.end(),
                                       [&](const EvictionScore& a, const EvictionScore& b) { return key(a) < key(b); });
    return best->node;
  };
}

VictimSelector lru_selector() {
  return [](const RadixCache& tree) -> std::optional<NodeId> {
    std::optional<NodeId> best;
    std::pair<std::uint64_t, std::uint64_t> best_key{};
    for (NodeId id : tree.evict_candidates()) {
      const RadixNode& n = tree.node(id);
      const std::pair key{n.last_access, n.ordinal};
      if (!best || key < best_key) {
        best = id;
        best_key = key;
      }
    }
    return best;
  };
}

EvictionResult evict_until(RadixCache& tree, ByteCount needed, ByteCount capacity, const VictimSelector& select) {
  EvictionResult r;
  if (needed > capacity) {
    r.fits = false;
    return r;
  }
  while (tree.total_bytes() + needed > capacity) {
    const std::optional<NodeId> victim = select(tree);
    if (!victim) {
      r.fits = false;
      break;
    }
    r.evicted.push_back(tree.node(*victim).ordinal);
    r.freed += tree.remove_node(*victim);
  }
  return r;
}

}  // namespace marconi
