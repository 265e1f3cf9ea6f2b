#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "marconi/cost_model.hpp"

namespace marconi {

/// Token ids are opaque; no tokenizer is involved.
using Token = std::int32_t;
using NodeId = std::uint32_t;

inline constexpr NodeId kRootNode = 0;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// A radix tree vertex. The node owns the KVs of its edge tokens and, when
/// checkpointed, the SSM + conv states of every SSM layer at checkpoint_pos.
struct RadixNode {
  std::vector<Token> edge_tokens;
  std::map<Token, NodeId> children;  // keyed by first edge token
  NodeId parent = kNoNode;
  std::int64_t depth_end = 0;
  bool has_ssm_checkpoint = false;
  std::int64_t checkpoint_pos = 0;
  ByteCount kv_bytes;
  ByteCount ssm_bytes;
  std::uint64_t last_access = 0;
  // Creation ordinal, unique over the lifetime of a tree. Node ids (slots)
  // are recycled, ordinals are not.
  std::uint64_t ordinal = 0;
  int pin_count = 0;
  bool alive = false;

  std::int64_t depth_begin() const {
    return depth_end - static_cast<std::int64_t>(edge_tokens.size());
  }
  bool pinned() const { return pin_count > 0; }
  ByteCount state_bytes() const { return kv_bytes + ssm_bytes; }
};

struct LookupResult {
  // Nodes the query walked through, root excluded. The last one may be only
  // partially matched.
  std::vector<NodeId> matched_path;
  // Tokens whose prefill is skipped.
  std::int64_t reuse_len = 0;
  // Longest common prefix between the query and the tree, ignoring SSM states.
  std::int64_t matched_len = 0;
  std::optional<NodeId> deepest_ssm_node;
  // Node whose timestamp a hit refreshes.
  std::optional<NodeId> reused_node;
};

struct SpeculationOutcome {
  bool creates_intermediate_node = false;
  std::int64_t branch_pos = 0;
  bool existing_node_missing_ssm = false;

  bool needs_checkpoint() const { return creates_intermediate_node || existing_node_missing_ssm; }
};

/// Where insert must place an SSM checkpoint. `boundary` becomes a node
/// boundary; the node ending there holds the state at `state_pos`, which may
/// lie earlier when checkpoints are chunk-aligned.
struct CheckpointRequest {
  std::int64_t boundary = 0;
  std::int64_t state_pos = 0;

  static CheckpointRequest at(std::int64_t pos) { return {pos, pos}; }
  auto operator<=>(const CheckpointRequest&) const = default;
};

/// Radix tree holding Attention KVs and SSM checkpoints of cached sequences.
///
/// KV bytes of a node covering positions (s, e] are charged for
/// g·(ceil(e/g) − ceil(s/g)) tokens, where g is the KV block granularity.
/// With g = 1 that is exactly the edge length; with g > 1 a partial block is
/// charged as a full one and the charge is still additive under splits and
/// merges.
///
/// Copies are deep and independent.
class RadixCache {
 public:
  explicit RadixCache(ModelConfig model, std::int64_t kv_block_tokens = 1);

  const ModelConfig& model() const { return model_; }
  std::int64_t kv_block_tokens() const { return kv_block_tokens_; }

  /// Read-only longest-prefix match.
  LookupResult match(std::span<const Token> query) const;

  /// match() followed by a touch of the reused node, if any.
  LookupResult lookup(std::span<const Token> query);

  /// Reports whether inserting `input` would split an edge or branch off an
  /// existing interior node. Never modifies the tree.
  SpeculationOutcome speculative_insert(std::span<const Token> input) const;

  /// Inserts `sequence`, forcing node boundaries and SSM checkpoints where
  /// requested, and returns the net bytes added. The node ending at the last
  /// token is stamped with a fresh timestamp. Throws std::invalid_argument for
  /// a checkpoint at position 0, past the sequence end, or with
  /// state_pos > boundary. Checkpoints are ignored for models without SSM
  /// layers.
  ByteCount insert(std::span<const Token> sequence, std::span<const CheckpointRequest> checkpoints);
  ByteCount insert(std::span<const Token> sequence, std::initializer_list<std::int64_t> checkpoints);

  /// Bytes insert() would add, computed without modifying the tree.
  ByteCount insert_cost(std::span<const Token> sequence,
                        std::span<const CheckpointRequest> checkpoints) const;

  /// Non-root, unpinned nodes with at most one child, in id order.
  std::vector<NodeId> evict_candidates() const;

  /// Evicts a candidate. A leaf frees all of its bytes; a node with one child
  /// frees only its SSM bytes and its edge and KVs are absorbed by the child.
  /// Throws std::invalid_argument for the root, pinned nodes, nodes with two
  /// or more children, or dead ids.
  ByteCount remove_node(NodeId id);

  /// Sets only this node's last access. `t` must exceed every timestamp
  /// issued so far; otherwise std::invalid_argument.
  void touch(NodeId id, std::uint64_t t);
  std::uint64_t next_timestamp() const { return clock_ + 1; }
  std::uint64_t clock() const { return clock_; }

  /// Pins every node on the path `sequence` walks through and returns them.
  std::vector<NodeId> pin_path(std::span<const Token> sequence);
  void unpin(std::span<const NodeId> ids);

  ByteCount total_bytes() const { return total_bytes_; }
  /// O(n) walk over all live nodes.
  ByteCount recompute_total_bytes() const;

  const RadixNode& node(NodeId id) const;
  bool is_live(NodeId id) const;
  /// Live non-root node ids in id order.
  std::vector<NodeId> live_nodes() const;
  std::size_t node_count() const { return live_count_; }

  /// Throws std::logic_error describing the first violated structural
  /// invariant.
  void check_invariants() const;

  std::string dump_text() const;
  nlohmann::json dump_json() const;

 private:
  NodeId allocate();
  void release(NodeId id);
  ByteCount charged_kv(std::int64_t begin, std::int64_t end) const;
  // Splits `id` so that a new parent node ends `keep` tokens into its edge.
  NodeId split(NodeId id, std::size_t keep);
  // Node whose edge ends exactly at `pos` along `sequence`, splitting if
  // needed. The sequence must already be present in the tree.
  NodeId boundary_at(std::span<const Token> sequence, std::int64_t pos);
  RadixCache path_clone(std::span<const Token> sequence) const;

  ModelConfig model_;
  std::int64_t kv_block_tokens_ = 1;
  std::vector<RadixNode> nodes_;
  std::vector<NodeId> free_;
  std::size_t live_count_ = 0;
  std::uint64_t next_ordinal_ = 1;
  std::uint64_t clock_ = 0;
  ByteCount total_bytes_;
};

}  // namespace marconi
