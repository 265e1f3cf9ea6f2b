#include "marconi/radix_cache.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace marconi {

namespace {

std::size_t common_prefix(std::span<const Token> a, std::span<const Token> b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

void fail(const std::string& what) { throw std::logic_error("radix invariant: " + what); }

}  // namespace

RadixCache::RadixCache(ModelConfig model, std::int64_t kv_block_tokens)
    : model_(model), kv_block_tokens_(kv_block_tokens) {
  model_.validate();
  if (kv_block_tokens_ < 1) throw std::invalid_argument("RadixCache: kv_block_tokens must be >= 1");
  RadixNode root;
  root.alive = true;
  nodes_.push_back(std::move(root));
}

NodeId RadixCache::allocate() {
  NodeId id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
    nodes_[id] = RadixNode{};
  } else {
    id = static_cast<NodeId>(nodes_.size());
    nodes_.emplace_back();
  }
  nodes_[id].alive = true;
  nodes_[id].ordinal = next_ordinal_++;
  ++live_count_;
  return id;
}

void RadixCache::release(NodeId id) {
  nodes_[id] = RadixNode{};
  free_.push_back(id);
  --live_count_;
}

ByteCount RadixCache::charged_kv(std::int64_t begin, std::int64_t end) const {
  const std::int64_t g = kv_block_tokens_;
  const std::int64_t tokens = g * (ceil_div(end, g) - ceil_div(begin, g));
  return model_kv_bytes(tokens, model_);
}

const RadixNode& RadixCache::node(NodeId id) const {
  if (!is_live(id)) throw std::out_of_range("RadixCache: no live node " + std::to_string(id));
  return nodes_[id];
}

bool RadixCache::is_live(NodeId id) const { return id < nodes_.size() && nodes_[id].alive; }

std::vector<NodeId> RadixCache::live_nodes() const {
  std::vector<NodeId> out;
  out.reserve(live_count_);
  for (NodeId id = 1; id < nodes_.size(); ++id) {
    if (nodes_[id].alive) out.push_back(id);
  }
  return out;
}

LookupResult RadixCache::match(std::span<const Token> query) const {
  LookupResult r;
  const bool hybrid = model_.n_ssm_layers > 0;
  NodeId cur = kRootNode;
  std::size_t pos = 0;
  while (pos < query.size()) {
    const auto& kids = nodes_[cur].children;
    auto it = kids.find(query[pos]);
    if (it == kids.end()) break;
    const NodeId child = it->second;
    const RadixNode& n = nodes_[child];
    const std::size_t k = common_prefix(n.edge_tokens, query.subspan(pos));
    r.matched_path.push_back(child);
    pos += k;
    if (hybrid && n.has_ssm_checkpoint && n.checkpoint_pos <= static_cast<std::int64_t>(pos)) {
      r.deepest_ssm_node = child;
    }
    if (k < n.edge_tokens.size()) break;
    cur = child;
  }
  r.matched_len = static_cast<std::int64_t>(pos);
  if (hybrid) {
    if (r.deepest_ssm_node) {
      r.reuse_len = nodes_[*r.deepest_ssm_node].checkpoint_pos;
      r.reused_node = r.deepest_ssm_node;
    }
  } else if (pos > 0) {
    r.reuse_len = r.matched_len;
    r.reused_node = r.matched_path.back();
  }
  return r;
}

LookupResult RadixCache::lookup(std::span<const Token> query) {
  LookupResult r = match(query);
  if (r.reused_node) touch(*r.reused_node, next_timestamp());
  return r;
}

SpeculationOutcome RadixCache::speculative_insert(std::span<const Token> input) const {
  NodeId cur = kRootNode;
  std::size_t pos = 0;
  while (pos < input.size()) {
    const RadixNode& here = nodes_[cur];
    auto it = here.children.find(input[pos]);
    if (it == here.children.end()) {
      // Diverges exactly at the end of `cur`. Extending a leaf is a plain
      // continuation; branching off an interior node reuses its prefix.
      if (cur == kRootNode || here.children.empty()) return {};
      SpeculationOutcome out;
      out.branch_pos = static_cast<std::int64_t>(pos);
      out.existing_node_missing_ssm = !here.has_ssm_checkpoint;
      return out;
    }
    const RadixNode& child = nodes_[it->second];
    const std::size_t k = common_prefix(child.edge_tokens, input.subspan(pos));
    if (k == child.edge_tokens.size()) {
      cur = it->second;
      pos += k;
      continue;
    }
    if (pos + k == input.size()) return {};  // input is a prefix of cached content
    SpeculationOutcome out;
    out.creates_intermediate_node = true;
    out.branch_pos = static_cast<std::int64_t>(pos + k);
    return out;
  }
  return {};
}

NodeId RadixCache::split(NodeId id, std::size_t keep) {
  const NodeId mid = allocate();
  RadixNode& orig = nodes_[id];
  RadixNode& m = nodes_[mid];
  const std::int64_t begin = orig.depth_begin();
  const std::int64_t mid_end = begin + static_cast<std::int64_t>(keep);

  m.edge_tokens.assign(orig.edge_tokens.begin(), orig.edge_tokens.begin() + static_cast<std::ptrdiff_t>(keep));
  orig.edge_tokens.erase(orig.edge_tokens.begin(), orig.edge_tokens.begin() + static_cast<std::ptrdiff_t>(keep));
  m.parent = orig.parent;
  m.depth_end = mid_end;
  m.last_access = orig.last_access;
  m.children.emplace(orig.edge_tokens.front(), id);
  nodes_[orig.parent].children[m.edge_tokens.front()] = mid;
  orig.parent = mid;

  m.kv_bytes = charged_kv(begin, mid_end);
  orig.kv_bytes = charged_kv(mid_end, orig.depth_end);

  // An aligned-down state may fall into the prefix half.
  if (orig.has_ssm_checkpoint && orig.checkpoint_pos <= mid_end) {
    m.has_ssm_checkpoint = true;
    m.checkpoint_pos = orig.checkpoint_pos;
    m.ssm_bytes = orig.ssm_bytes;
    orig.has_ssm_checkpoint = false;
    orig.checkpoint_pos = 0;
    orig.ssm_bytes = ByteCount{};
  }
  return mid;
}

NodeId RadixCache::boundary_at(std::span<const Token> sequence, std::int64_t pos) {
  NodeId cur = kRootNode;
  std::int64_t depth = 0;
  while (depth < pos) {
    const NodeId child = nodes_[cur].children.at(sequence[static_cast<std::size_t>(depth)]);
    const std::int64_t end = nodes_[child].depth_end;
    if (end <= pos) {
      cur = child;
      depth = end;
    } else {
      return split(child, static_cast<std::size_t>(pos - depth));
    }
  }
  return cur;
}

ByteCount RadixCache::insert(std::span<const Token> sequence, std::span<const CheckpointRequest> checkpoints) {
  const auto len = static_cast<std::int64_t>(sequence.size());
  for (const auto& cp : checkpoints) {
    if (cp.boundary <= 0 || cp.state_pos <= 0) {
      throw std::invalid_argument("RadixCache::insert: checkpoint at position 0");
    }
    if (cp.boundary > len) {
      throw std::invalid_argument("RadixCache::insert: checkpoint " + std::to_string(cp.boundary) +
                                  " beyond sequence end " + std::to_string(len));
    }
    if (cp.state_pos > cp.boundary) {
      throw std::invalid_argument("RadixCache::insert: checkpoint state past its boundary");
    }
  }
  if (sequence.empty()) return ByteCount{};

  const ByteCount before = total_bytes_;
  const std::uint64_t now = ++clock_;

  NodeId cur = kRootNode;
  std::size_t pos = 0;
  while (pos < sequence.size()) {
    auto it = nodes_[cur].children.find(sequence[pos]);
    if (it == nodes_[cur].children.end()) {
      const NodeId leaf = allocate();
      RadixNode& n = nodes_[leaf];
      n.edge_tokens.assign(sequence.begin() + static_cast<std::ptrdiff_t>(pos), sequence.end());
      n.parent = cur;
      n.depth_end = len;
      n.kv_bytes = charged_kv(static_cast<std::int64_t>(pos), len);
      nodes_[cur].children.emplace(sequence[pos], leaf);
      total_bytes_ += n.kv_bytes;
      cur = leaf;
      pos = sequence.size();
      break;
    }
    NodeId child = it->second;
    const std::size_t k = common_prefix(nodes_[child].edge_tokens, sequence.subspan(pos));
    if (k < nodes_[child].edge_tokens.size()) child = split(child, k);
    cur = child;
    pos += k;
  }
  const NodeId end_node = cur;

  if (model_.n_ssm_layers > 0) {
    std::vector<CheckpointRequest> sorted(checkpoints.begin(), checkpoints.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& cp : sorted) {
      NodeId target = boundary_at(sequence, cp.boundary);
      if (cp.state_pos <= nodes_[target].depth_begin()) target = boundary_at(sequence, cp.state_pos);
      RadixNode& n = nodes_[target];
      if (!n.has_ssm_checkpoint) {
        n.has_ssm_checkpoint = true;
        n.checkpoint_pos = cp.state_pos;
        n.ssm_bytes = model_checkpoint_bytes(model_);
        total_bytes_ += n.ssm_bytes;
        n.last_access = now;
      } else if (n.checkpoint_pos < cp.state_pos) {
        n.checkpoint_pos = cp.state_pos;
        n.last_access = now;
      }
    }
  }
  nodes_[end_node].last_access = now;
  return total_bytes_ - before;
}

ByteCount RadixCache::insert(std::span<const Token> sequence, std::initializer_list<std::int64_t> checkpoints) {
  std::vector<CheckpointRequest> cps;
  for (auto p : checkpoints) cps.push_back(CheckpointRequest::at(p));
  return insert(sequence, cps);
}

RadixCache RadixCache::path_clone(std::span<const Token> sequence) const {
  RadixCache c(model_, kv_block_tokens_);
  c.clock_ = clock_;
  c.next_ordinal_ = next_ordinal_;
  NodeId cur = kRootNode;
  NodeId copy_parent = kRootNode;
  std::size_t pos = 0;
  while (pos < sequence.size()) {
    auto it = nodes_[cur].children.find(sequence[pos]);
    if (it == nodes_[cur].children.end()) break;
    const RadixNode& src = nodes_[it->second];
    const NodeId id = c.allocate();
    RadixNode& dst = c.nodes_[id];
    dst.edge_tokens = src.edge_tokens;
    dst.parent = copy_parent;
    dst.depth_end = src.depth_end;
    dst.has_ssm_checkpoint = src.has_ssm_checkpoint;
    dst.checkpoint_pos = src.checkpoint_pos;
    dst.kv_bytes = src.kv_bytes;
    dst.ssm_bytes = src.ssm_bytes;
    dst.last_access = src.last_access;
    c.nodes_[copy_parent].children.emplace(src.edge_tokens.front(), id);
    c.total_bytes_ += src.state_bytes();
    const std::size_t k = common_prefix(src.edge_tokens, sequence.subspan(pos));
    if (k < src.edge_tokens.size()) break;
    pos += k;
    cur = it->second;
    copy_parent = id;
  }
  return c;
}

ByteCount RadixCache::insert_cost(std::span<const Token> sequence,
                                  std::span<const CheckpointRequest> checkpoints) const {
  RadixCache scratch = path_clone(sequence);
  return scratch.insert(sequence, checkpoints);
}

std::vector<NodeId> RadixCache::evict_candidates() const {
  std::vector<NodeId> out;
  for (NodeId id = 1; id < nodes_.size(); ++id) {
    const RadixNode& n = nodes_[id];
    if (n.alive && !n.pinned() && n.children.size() <= 1) out.push_back(id);
  }
  return out;
}

ByteCount RadixCache::remove_node(NodeId id) {
  if (id == kRootNode) throw std::invalid_argument("RadixCache::remove_node: root is not evictable");
  if (!is_live(id)) throw std::invalid_argument("RadixCache::remove_node: no live node " + std::to_string(id));
  RadixNode& n = nodes_[id];
  if (n.pinned()) throw std::invalid_argument("RadixCache::remove_node: node is pinned");
  if (n.children.size() > 1) throw std::invalid_argument("RadixCache::remove_node: node has multiple children");

  RadixNode& parent = nodes_[n.parent];
  ByteCount freed;
  if (n.children.empty()) {
    freed = n.state_bytes();
    parent.children.erase(n.edge_tokens.front());
  } else {
    freed = n.ssm_bytes;
    const NodeId child_id = n.children.begin()->second;
    RadixNode& child = nodes_[child_id];
    child.edge_tokens.insert(child.edge_tokens.begin(), n.edge_tokens.begin(), n.edge_tokens.end());
    child.kv_bytes += n.kv_bytes;
    child.parent = n.parent;
    parent.children[n.edge_tokens.front()] = child_id;
  }
  total_bytes_ -= freed;
  release(id);
  return freed;
}

void RadixCache::touch(NodeId id, std::uint64_t t) {
  if (!is_live(id)) throw std::invalid_argument("RadixCache::touch: no live node " + std::to_string(id));
  if (t <= clock_) {
    throw std::invalid_argument("RadixCache::touch: timestamp " + std::to_string(t) +
                                " not after " + std::to_string(clock_));
  }
  clock_ = t;
  nodes_[id].last_access = t;
}

std::vector<NodeId> RadixCache::pin_path(std::span<const Token> sequence) {
  std::vector<NodeId> path = match(sequence).matched_path;
  for (NodeId id : path) ++nodes_[id].pin_count;
  return path;
}

void RadixCache::unpin(std::span<const NodeId> ids) {
  for (NodeId id : ids) {
    if (is_live(id) && nodes_[id].pin_count > 0) --nodes_[id].pin_count;
  }
}

ByteCount RadixCache::recompute_total_bytes() const {
  ByteCount sum;
  for (const auto& n : nodes_) {
    if (n.alive) sum += n.state_bytes();
  }
  return sum;
}

void RadixCache::check_invariants() const {
  const RadixNode& root = nodes_[kRootNode];
  if (!root.alive || !root.edge_tokens.empty() || root.depth_end != 0 || root.has_ssm_checkpoint ||
      root.state_bytes().value != 0) {
    fail("malformed root");
  }
  std::size_t live = 0;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const RadixNode& n = nodes_[id];
    if (!n.alive) continue;
    ++live;
    for (const auto& [tok, child] : n.children) {
      if (!is_live(child)) fail("dangling child of node " + std::to_string(id));
      const RadixNode& c = nodes_[child];
      if (c.parent != id) fail("parent link of node " + std::to_string(child));
      if (c.edge_tokens.empty() || c.edge_tokens.front() != tok) fail("child key mismatch at node " + std::to_string(id));
    }
    if (id == kRootNode) continue;
    const std::string where = " at node " + std::to_string(id);
    if (n.edge_tokens.empty()) fail("empty edge" + where);
    if (!is_live(n.parent)) fail("dead parent" + where);
    const RadixNode& p = nodes_[n.parent];
    auto it = p.children.find(n.edge_tokens.front());
    if (it == p.children.end() || it->second != id) fail("not registered with parent" + where);
    if (n.depth_end != p.depth_end + static_cast<std::int64_t>(n.edge_tokens.size())) fail("depth_end" + where);
    if (n.has_ssm_checkpoint) {
      if (n.checkpoint_pos <= n.depth_begin() || n.checkpoint_pos > n.depth_end) fail("checkpoint_pos range" + where);
      if (n.ssm_bytes != model_checkpoint_bytes(model_) || n.ssm_bytes.value <= 0) fail("ssm_bytes" + where);
    } else if (n.ssm_bytes.value != 0) {
      fail("ssm_bytes without checkpoint" + where);
    }
    if (n.kv_bytes != charged_kv(n.depth_begin(), n.depth_end)) fail("kv_bytes" + where);
    if (n.pin_count < 0) fail("negative pin count" + where);
  }
  if (live != live_count_ + 1) fail("live node count");
  if (recompute_total_bytes() != total_bytes_) fail("total_bytes drift");
}

std::string RadixCache::dump_text() const {
  std::ostringstream out;
  out << "root total_bytes=" << total_bytes_.value << "\n";
  struct Frame {
    NodeId id;
    int depth;
  };
  std::vector<Frame> stack;
  const auto& rk = nodes_[kRootNode].children;
  for (auto it = rk.rbegin(); it != rk.rend(); ++it) stack.push_back({it->second, 1});
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const RadixNode& n = nodes_[f.id];
    out << std::string(static_cast<std::size_t>(2 * f.depth), ' ') << "#" << n.ordinal
        << " edge=" << n.edge_tokens.size() << " end=" << n.depth_end << " kv=" << n.kv_bytes.value
        << " ssm=" << n.ssm_bytes.value;
    if (n.has_ssm_checkpoint) out << " ckpt@" << n.checkpoint_pos;
    out << " t=" << n.last_access;
    if (n.pinned()) out << " pinned";
    out << "\n";
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back({it->second, f.depth + 1});
  }
  return out.str();
}

nlohmann::json RadixCache::dump_json() const {
  // Recursion depth is bounded by the number of branch points on a path.
  auto build = [this](auto&& self, NodeId id) -> nlohmann::json {
    const RadixNode& n = nodes_[id];
    nlohmann::json j;
    j["edge_len"] = n.edge_tokens.size();
    j["depth_end"] = n.depth_end;
    j["kv_bytes"] = n.kv_bytes.value;
    j["ssm_bytes"] = n.ssm_bytes.value;
    j["checkpoint"] = n.has_ssm_checkpoint;
    if (n.has_ssm_checkpoint) j["checkpoint_pos"] = n.checkpoint_pos;
    j["last_access"] = n.last_access;
    nlohmann::json kids = nlohmann::json::array();
    for (const auto& [tok, child] : n.children) kids.push_back(self(self, child));
    j["children"] = std::move(kids);
    return j;
  };
  nlohmann::json j = build(build, kRootNode);
  j["total_bytes"] = total_bytes_.value;
  return j;
}

}  // namespace marconi
