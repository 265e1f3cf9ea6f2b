#pragma once

#include <compare>
#include <cstdint>

namespace marconi {

/// Floating-point operation count. Prefill FLOPs reach ~1e15 at 1e5 tokens,
/// so the count is kept in double precision.
struct FlopCount {
  double value = 0.0;

  auto operator<=>(const FlopCount&) const = default;

  FlopCount& operator+=(FlopCount o) {
    value += o.value;
    return *this;
  }
  friend FlopCount operator+(FlopCount a, FlopCount b) { return FlopCount{a.value + b.value}; }
  friend FlopCount operator-(FlopCount a, FlopCount b) { return FlopCount{a.value - b.value}; }
  friend FlopCount operator*(double k, FlopCount f) { return FlopCount{k * f.value}; }
};

/// Exact byte count used for capacity accounting.
struct ByteCount {
  std::int64_t value = 0;

  auto operator<=>(const ByteCount&) const = default;

  ByteCount& operator+=(ByteCount o) {
    value += o.value;
    return *this;
  }
  ByteCount& operator-=(ByteCount o) {
    value -= o.value;
    return *this;
  }
  friend ByteCount operator+(ByteCount a, ByteCount b) { return ByteCount{a.value + b.value}; }
  friend ByteCount operator-(ByteCount a, ByteCount b) { return ByteCount{a.value - b.value}; }
  friend ByteCount operator*(std::int64_t k, ByteCount b) { return ByteCount{k * b.value}; }
};

/// Layer composition and dimensions of a (possibly hybrid) model.
struct ModelConfig {
  std::int64_t n_attention_layers = 4;
  std::int64_t n_ssm_layers = 24;
  std::int64_t n_mlp_layers = 28;
  std::int64_t d_model = 4096;
  std::int64_t d_state = 128;
  std::int64_t bytes_per_param = 2;
  std::int64_t conv_in_channels = 2 * 4096 + 2 * 128;
  std::int64_t conv_kernel = 4;
  // SSM prefill chunk granularity; checkpoints can be aligned down to it.
  std::int64_t chunk_size = 32;

  /// 7B hybrid: {4, 24, 28} {Attention, SSM, MLP}, D=4096, N=128, fp16.
  static ModelConfig hybrid_7b() { return ModelConfig{}; }

  /// conv_1d input channels used when none are configured: 2·D + 2·N.
  static std::int64_t default_conv_in_channels(std::int64_t d_model, std::int64_t d_state) {
    return 2 * d_model + 2 * d_state;
  }

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Per-layer prefill FLOPs for L tokens.
FlopCount attention_flops(std::int64_t tokens, const ModelConfig& cfg);
FlopCount ssm_flops(std::int64_t tokens, const ModelConfig& cfg);
FlopCount mlp_flops(std::int64_t tokens, const ModelConfig& cfg);

/// KV footprint of L tokens in one Attention layer: 2·L·D·bytes_per_param.
ByteCount kv_bytes(std::int64_t tokens, const ModelConfig& cfg);
/// Recurrent state of one SSM layer: D·N·bytes_per_param, independent of L.
ByteCount ssm_state_bytes(const ModelConfig& cfg);
/// conv_1d state of one SSM layer: in_channels·kernel·bytes_per_param.
ByteCount conv_state_bytes(const ModelConfig& cfg);

/// KV bytes of L tokens summed over all Attention layers.
ByteCount model_kv_bytes(std::int64_t tokens, const ModelConfig& cfg);
/// Bytes of one SSM checkpoint: SSM + conv state over all SSM layers.
ByteCount model_checkpoint_bytes(const ModelConfig& cfg);

/// Prefill FLOPs of the whole model over L tokens.
FlopCount model_prefill_flops(std::int64_t tokens, const ModelConfig& cfg);

/// FLOPs to prefill positions (prefix_len, end_len] given a cached prefix.
/// Throws std::invalid_argument if prefix_len > end_len or either is negative.
FlopCount delta_prefill_flops(std::int64_t prefix_len, std::int64_t end_len, const ModelConfig& cfg);

/// FLOPs saved per byte of cached state. Throws std::invalid_argument when
/// state_bytes is not positive.
double flop_efficiency(FlopCount flops_saved, ByteCount state_bytes);

}  // namespace marconi
