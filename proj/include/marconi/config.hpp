#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "marconi/cost_model.hpp"
#include "marconi/engine.hpp"
#include "marconi/policies.hpp"

namespace marconi {

/// Raised for malformed config text or out-of-range values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  PolicyConfig policy;
  PerfModel perf;
  ByteCount capacity{40LL * 1000 * 1000 * 1000};
  // When unset, conv_in_channels follows d_model and d_state.
  bool conv_in_channels_set = false;

  /// Fills derived defaults and validates every section. Throws ConfigError.
  void finalize();
};

/// Flat key-value text with [model], [policy], [perf] and [cache] sections:
///
///   [model]
///   n_ssm_layers = 24
///   [policy]
///   kind = marconi
///   alpha_grid = 0, 0.5, 1
///
/// '#' starts a comment. Keys carry the field names of ModelConfig,
/// PolicyConfig (tuner fields prefixed with tuner_ where ambiguous), PerfModel
/// and capacity_bytes. Values are applied on top of `base`.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

/// Applies one key of a section. Shared by the file parser and CLI overrides.
void apply_config_key(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

}  // namespace marconi
