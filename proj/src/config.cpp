#include "marconi/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace marconi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

}  // namespace

void apply_config_key(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  if (section == "model") {
    ModelConfig& m = cfg.model;
    if (key == "n_attention_layers") m.n_attention_layers = to_int(key, value);
    else if (key == "n_ssm_layers") m.n_ssm_layers = to_int(key, value);
    else if (key == "n_mlp_layers") m.n_mlp_layers = to_int(key, value);
    else if (key == "d_model") m.d_model = to_int(key, value);
    else if (key == "d_state") m.d_state = to_int(key, value);
    else if (key == "bytes_per_param") m.bytes_per_param = to_int(key, value);
    else if (key == "conv_in_channels") {
      m.conv_in_channels = to_int(key, value);
      cfg.conv_in_channels_set = true;
    } else if (key == "conv_kernel") m.conv_kernel = to_int(key, value);
    else if (key == "chunk_size") m.chunk_size = to_int(key, value);
    else throw ConfigError("unknown key '" + key + "' in [model]");
  } else if (section == "policy") {
    PolicyConfig& p = cfg.policy;
    if (key == "kind") {
      try {
        p.kind = parse_policy_kind(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "alpha") p.alpha = to_double(key, value);
    else if (key == "block_size") p.block_size = to_int(key, value);
    else if (key == "chunk_align") p.chunk_align = to_bool(key, value);
    else if (key == "tuner_enabled") p.tuner.enabled = to_bool(key, value);
    else if (key == "bootstrap_multiplier") p.tuner.bootstrap_multiplier = to_double(key, value);
    else if (key == "alpha_grid") p.tuner.alpha_grid = to_double_list(key, value);
    else if (key == "parallel_replays") p.tuner.parallel_replays = static_cast<int>(to_int(key, value));
    else throw ConfigError("unknown key '" + key + "' in [policy]");
  } else if (section == "perf") {
    if (key == "device_flops_per_s") cfg.perf.device_flops_per_s = to_double(key, value);
    else if (key == "fixed_overhead_ms") cfg.perf.fixed_overhead_ms = to_double(key, value);
    else throw ConfigError("unknown key '" + key + "' in [perf]");
  } else if (section == "cache") {
    if (key == "capacity_bytes") cfg.capacity = ByteCount{to_int(key, value)};
    else throw ConfigError("unknown key '" + key + "' in [cache]");
  } else {
    throw ConfigError("unknown section [" + section + "]");
  }
}

void RunConfig::finalize() {
  if (!conv_in_channels_set) model.conv_in_channels = ModelConfig::default_conv_in_channels(model.d_model, model.d_state);
  try {
    model.validate();
    policy.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (capacity.value <= 0) throw ConfigError("capacity_bytes must be > 0");
  if (!(perf.device_flops_per_s > 0.0)) throw ConfigError("device_flops_per_s must be > 0");
  if (perf.fixed_overhead_ms < 0.0) throw ConfigError("fixed_overhead_ms must be >= 0");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "policy" && section != "perf" && section != "cache") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    try {
      apply_config_key(base, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

}  // namespace marconi
