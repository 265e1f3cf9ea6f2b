#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marconi/cost_model.hpp"
#include "marconi/radix_cache.hpp"
#include "marconi/workload.hpp"

namespace marconi {

enum class PolicyKind { marconi, sglang_plus, vllm_plus, no_cache };

std::string_view to_string(PolicyKind kind);
/// Throws std::invalid_argument for unknown names.
PolicyKind parse_policy_kind(std::string_view name);

struct TunerConfig {
  bool enabled = true;
  // Bootstrap window = multiplier × requests seen before the first eviction.
  double bootstrap_multiplier = 10.0;
  std::vector<double> alpha_grid = {0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
  // Upper bound on concurrent grid replays; 0 picks the hardware concurrency.
  int parallel_replays = 0;

  bool operator==(const TunerConfig&) const = default;
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::marconi;
  double alpha = 0.0;
  std::int64_t block_size = 32;
  bool chunk_align = false;
  TunerConfig tuner;

  static PolicyConfig of(PolicyKind kind) {
    PolicyConfig p;
    p.kind = kind;
    p.tuner.enabled = kind == PolicyKind::marconi;
    return p;
  }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const PolicyConfig&) const = default;
};

struct AdmissionPlan {
  std::vector<CheckpointRequest> prefill_checkpoints;
  std::int64_t final_checkpoint = 0;

  /// Prefill checkpoints plus the final one, as insert() expects them.
  std::vector<CheckpointRequest> checkpoints() const;
};

/// Judicious admission: checkpoint the branch point found by speculative
/// insertion (aligned down to the SSM chunk when enabled) and the last
/// decoded token. `reuse_len` is the prefix the request will hit; branch
/// checkpoints at or below it are skipped.
AdmissionPlan plan_admission_marconi(const Request& request, const RadixCache& tree, const PolicyConfig& policy,
                                     std::int64_t reuse_len);

/// Fine-grained admission: a checkpoint at every block boundary above the
/// reuse point plus the sequence end.
AdmissionPlan plan_admission_vllm_plus(const Request& request, const PolicyConfig& policy,
                                       std::int64_t reuse_len = 0);

struct EvictionScore {
  NodeId node = kNoNode;
  double recency_norm = 0.0;
  double flop_eff_norm = 0.0;
  double utility = 0.0;
};

/// FLOPs saved per byte for one node: prefill FLOPs of its own edge relative
/// to its parent over the bytes it holds. nullopt for a node holding no
/// bytes.
std::optional<double> node_flop_efficiency(const RadixCache& tree, NodeId id);

/// Utility recency + alpha·flop_efficiency for every eviction candidate. Both
/// terms are min-max normalized over all live nodes; a degenerate range maps
/// to 0.5. Nodes without bytes get a FLOP-efficiency score of 1.
std::vector<EvictionScore> score_candidates(const RadixCache& tree, double alpha);

/// Picks the next node to evict, or nullopt when nothing is evictable.
using VictimSelector = std::function<std::optional<NodeId>(const RadixCache&)>;

/// Lowest utility; ties go to the older last access, then the older node.
VictimSelector flop_aware_selector(double alpha);
/// Oldest last access, then oldest node.
VictimSelector lru_selector();

struct EvictionResult {
  ByteCount freed;
  std::vector<std::uint64_t> evicted;  // node ordinals in eviction order
  bool fits = true;                    // false: admission must be bypassed
};

/// Evicts until total_bytes() + needed <= capacity, re-selecting after every
/// removal.
EvictionResult evict_until(RadixCache& tree, ByteCount needed, ByteCount capacity, const VictimSelector& select);

}  // namespace marconi
