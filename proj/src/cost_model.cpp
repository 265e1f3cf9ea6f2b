#include "marconi/cost_model.hpp"

#include <stdexcept>
#include <string>

namespace marconi {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("ModelConfig: " + what);
}

}  // namespace

void ModelConfig::validate() const {
  require(n_attention_layers >= 0, "n_attention_layers must be >= 0");
  require(n_ssm_layers >= 0, "n_ssm_layers must be >= 0");
  require(n_mlp_layers >= 0, "n_mlp_layers must be >= 0");
  require(d_model >= 1, "d_model must be >= 1");
  require(d_state >= 0, "d_state must be >= 0");
  require(bytes_per_param == 1 || bytes_per_param == 2 || bytes_per_param == 4,
          "bytes_per_param must be 1, 2 or 4");
  require(conv_in_channels >= 0, "conv_in_channels must be >= 0");
  require(conv_kernel >= 0, "conv_kernel must be >= 0");
  require(chunk_size >= 1, "chunk_size must be >= 1");
}

FlopCount attention_flops(std::int64_t tokens, const ModelConfig& cfg) {
  const double l = static_cast<double>(tokens);
  const double d = static_cast<double>(cfg.d_model);
  return FlopCount{8.0 * l * d * d + 4.0 * l * l * d};
}

FlopCount ssm_flops(std::int64_t tokens, const ModelConfig& cfg) {
  const double l = static_cast<double>(tokens);
  const double d = static_cast<double>(cfg.d_model);
  const double n = static_cast<double>(cfg.d_state);
  return FlopCount{12.0 * l * d * d + 16.0 * l * d * n + 10.0 * l};
}

FlopCount mlp_flops(std::int64_t tokens, const ModelConfig& cfg) {
  const double l = static_cast<double>(tokens);
  const double d = static_cast<double>(cfg.d_model);
  return FlopCount{16.0 * l * d * d};
}

ByteCount kv_bytes(std::int64_t tokens, const ModelConfig& cfg) {
  return ByteCount{2 * tokens * cfg.d_model * cfg.bytes_per_param};
}

ByteCount ssm_state_bytes(const ModelConfig& cfg) {
  return ByteCount{cfg.d_model * cfg.d_state * cfg.bytes_per_param};
}

ByteCount conv_state_bytes(const ModelConfig& cfg) {
  return ByteCount{cfg.conv_in_channels * cfg.conv_kernel * cfg.bytes_per_param};
}

ByteCount model_kv_bytes(std::int64_t tokens, const ModelConfig& cfg) {
  return cfg.n_attention_layers * kv_bytes(tokens, cfg);
}

ByteCount model_checkpoint_bytes(const ModelConfig& cfg) {
  return cfg.n_ssm_layers * (ssm_state_bytes(cfg) + conv_state_bytes(cfg));
}

FlopCount model_prefill_flops(std::int64_t tokens, const ModelConfig& cfg) {
  return static_cast<double>(cfg.n_attention_layers) * attention_flops(tokens, cfg) +
         static_cast<double>(cfg.n_ssm_layers) * ssm_flops(tokens, cfg) +
         static_cast<double>(cfg.n_mlp_layers) * mlp_flops(tokens, cfg);
}

FlopCount delta_prefill_flops(std::int64_t prefix_len, std::int64_t end_len, const ModelConfig& cfg) {
  if (prefix_len < 0 || end_len < 0) {
    throw std::invalid_argument("delta_prefill_flops: negative length");
  }
  if (prefix_len > end_len) {
    throw std::invalid_argument("delta_prefill_flops: prefix_len " + std::to_string(prefix_len) +
                                " exceeds end_len " + std::to_string(end_len));
  }
  if (prefix_len == end_len) return FlopCount{};
  return model_prefill_flops(end_len, cfg) - model_prefill_flops(prefix_len, cfg);
}

double flop_efficiency(FlopCount flops_saved, ByteCount state_bytes) {
  if (state_bytes.value <= 0) {
    throw std::invalid_argument("flop_efficiency: cache entry holds no state bytes");
  }
  return flops_saved.value / static_cast<double>(state_bytes.value);
}

}  // namespace marconi
