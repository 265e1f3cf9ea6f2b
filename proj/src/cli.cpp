#include "marconi/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "marconi/config.hpp"
#include "marconi/engine.hpp"
#include "marconi/workload.hpp"

namespace marconi {

namespace {

namespace fs = std::filesystem;

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags that override config-file keys; the flag is the key with '-' for '_'.
struct OverrideFlag {
  const char* section;
  const char* key;
  const char* help;
};

constexpr OverrideFlag kOverrideFlags[] = {
    {"model", "n_attention_layers", "Attention layers"},
    {"model", "n_ssm_layers", "SSM layers"},
    {"model", "n_mlp_layers", "MLP layers"},
    {"model", "d_model", "model dimension D"},
    {"model", "d_state", "SSM state dimension N"},
    {"model", "bytes_per_param", "bytes per parameter (1, 2 or 4)"},
    {"model", "conv_in_channels", "conv_1d input channels (default 2*d_model + 2*d_state)"},
    {"model", "conv_kernel", "conv_1d kernel width"},
    {"model", "chunk_size", "SSM prefill chunk size in tokens"},
    {"policy", "alpha", "initial FLOP-efficiency weight"},
    {"policy", "block_size", "token block size of vllm_plus"},
    {"policy", "chunk_align", "align branch checkpoints down to chunk boundaries (true/false)"},
    {"policy", "tuner_enabled", "tune alpha after the first eviction (true/false)"},
    {"policy", "bootstrap_multiplier", "bootstrap window as a multiple of requests before first eviction, in [5, 15]"},
    {"policy", "alpha_grid", "comma-separated alpha grid, must contain 0"},
    {"policy", "parallel_replays", "concurrent tuner replays (0 = hardware)"},
    {"perf", "device_flops_per_s", "TTFT proxy: device throughput in FLOP/s"},
    {"perf", "fixed_overhead_ms", "TTFT proxy: constant overhead in ms"},
    {"cache", "capacity_bytes", "cache capacity in bytes"},
};

std::string flag_name(const char* key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

struct ReplayOptions {
  std::string trace_path;
  std::string config_path;
  std::string out_dir = "out";
  std::map<std::string, std::string> overrides;  // "section.key" -> value
  std::vector<std::string> override_order;
  std::optional<double> capacity_gb;
  int jobs = 0;
};

void add_replay_options(CLI::App* sub, ReplayOptions& o) {
  sub->add_option("--trace", o.trace_path, "JSONL trace to replay")->required();
  sub->add_option("--config", o.config_path, "key-value config file; flags override its values");
  sub->add_option("--out-dir", o.out_dir, "directory for CSV/JSON outputs")->capture_default_str();
  sub->add_option("--jobs", o.jobs, "concurrent replays (0 = hardware)")->capture_default_str();
  sub->add_option_function<double>(
      "--capacity-gb", [&o](double gb) { o.capacity_gb = gb; }, "cache capacity in GB (1e9 bytes)");
  for (const auto& f : kOverrideFlags) {
    const std::string id = std::string(f.section) + "." + f.key;
    sub->add_option_function<std::string>(
        flag_name(f.key),
        [&o, id](const std::string& v) {
          if (!o.overrides.count(id)) o.override_order.push_back(id);
          o.overrides[id] = v;
        },
        f.help);
  }
}

RunConfig resolve_config(const ReplayOptions& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw MissingFile("config file not found: " + o.config_path);
    cfg = load_config_file(o.config_path);
  }
  for (const auto& id : o.override_order) {
    const auto dot = id.find('.');
    apply_config_key(cfg, id.substr(0, dot), id.substr(dot + 1), o.overrides.at(id));
  }
  if (o.capacity_gb) {
    if (!(*o.capacity_gb > 0.0)) throw ConfigError("--capacity-gb must be > 0");
    cfg.capacity = ByteCount{static_cast<std::int64_t>(std::llround(*o.capacity_gb * 1e9))};
  }
  cfg.finalize();
  return cfg;
}

Trace read_trace(const std::string& path) {
  if (!fs::exists(path)) throw MissingFile("trace file not found: " + path);
  return load_trace(path);
}

std::vector<PolicyKind> parse_policies(const std::vector<std::string>& names) {
  std::vector<PolicyKind> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_policy_kind(n));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (out.empty()) throw ConfigError("no policies given");
  return out;
}

ReplayConfig make_replay(const RunConfig& base, PolicyKind kind, ByteCount capacity, std::string label) {
  ReplayConfig rc;
  rc.label = std::move(label);
  rc.model = base.model;
  rc.policy = base.policy;
  rc.policy.kind = kind;
  if (kind != PolicyKind::marconi) rc.policy.tuner.enabled = false;
  rc.capacity = capacity;
  rc.perf = base.perf;
  return rc;
}

void write_outputs(const fs::path& dir, const SweepResult& r, const PerfModel& perf) {
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / (r.label + ".csv"));
    write_outcomes_csv(r.metrics, csv);
  }
  std::ofstream js(dir / (r.label + ".json"));
  js << summary_json(r.metrics, perf).dump(2) << '\n';
}

void print_table(std::ostream& out, const std::vector<SweepResult>& results) {
  out << std::left << std::setw(28) << "config" << std::right << std::setw(14) << "capacity_GB" << std::setw(12)
      << "hit_rate" << std::setw(14) << "flops_saved" << std::setw(12) << "ttft_p50" << std::setw(12) << "ttft_p95"
      << std::setw(8) << "alpha" << "  status\n";
  for (const auto& r : results) {
    out << std::left << std::setw(28) << r.label << std::right;
    if (r.ok) {
      const auto& m = r.metrics;
      out << std::fixed << std::setprecision(2) << std::setw(14) << static_cast<double>(m.capacity.value) / 1e9
          << std::setprecision(4) << std::setw(12) << m.token_hit_rate << std::scientific << std::setprecision(3)
          << std::setw(14) << m.flops_saved_total.value << std::fixed << std::setprecision(1) << std::setw(12)
          << m.ttft_p50 << std::setw(12) << m.ttft_p95 << std::setprecision(2) << std::setw(8) << m.alpha_final
          << "  ok\n";
    } else {
      out << "  FAILED: " << r.error << "\n";
    }
    out.unsetf(std::ios::floatfield);
  }
  out << "(ttft columns are an analytical proxy in ms)\n";
}

int finish(std::ostream& out, std::ostream& err, const std::vector<SweepResult>& results, const fs::path& dir,
           const PerfModel& perf) {
  bool all_ok = true;
  for (const auto& r : results) {
    if (r.ok) {
      write_outputs(dir, r, perf);
    } else {
      all_ok = false;
      err << "replay '" << r.label << "' failed: " << r.error << "\n";
    }
  }
  print_table(out, results);
  return all_ok ? kExitOk : kExitReplayFailed;
}

std::string capacity_label(ByteCount c) {
  std::ostringstream s;
  s << std::setprecision(6) << static_cast<double>(c.value) / 1e9 << "GB";
  return s.str();
}

void add_length_options(CLI::App* sub, const std::string& name, LengthDist& d, std::string& kind) {
  kind = to_string(d.kind);
  sub->add_option("--" + name + "-dist", kind, name + " distribution: constant|uniform|exponential|lognormal")
      ->capture_default_str();
  sub->add_option("--" + name + "-mean", d.mean, name + " mean")->capture_default_str();
  sub->add_option("--" + name + "-spread", d.spread, name + " spread (uniform: half-width/mean, lognormal: sigma)")
      ->capture_default_str();
  sub->add_option("--" + name + "-min", d.min, name + " lower clamp")->capture_default_str();
  sub->add_option("--" + name + "-max", d.max, name + " upper clamp")->capture_default_str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace-driven prefix-cache simulator for hybrid Attention/SSM models"};
  app.require_subcommand(1);

  // gen-trace
  GeneratorConfig gen;
  std::string gen_out;
  std::string rounds_kind, prompt_kind, user_kind, output_kind;
  auto* gen_cmd = app.add_subcommand("gen-trace", "generate a synthetic multi-turn trace");
  gen_cmd->add_option("--out", gen_out, "output JSONL path")->required();
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  gen_cmd->add_option("--n-sessions", gen.n_sessions, "number of sessions")->capture_default_str();
  gen_cmd->add_option("--session-rate", gen.session_rate, "session arrivals per second (Poisson)")
      ->capture_default_str();
  gen_cmd->add_option("--inter-request-delay-s", gen.inter_request_delay_s, "mean delay between rounds (s)")
      ->capture_default_str();
  gen_cmd->add_option("--system-prompt-pool", gen.system_prompt_pool, "number of shared system prompts")
      ->capture_default_str();
  add_length_options(gen_cmd, "rounds", gen.rounds, rounds_kind);
  add_length_options(gen_cmd, "system-prompt-len", gen.system_prompt_len, prompt_kind);
  add_length_options(gen_cmd, "user-len", gen.user_len, user_kind);
  add_length_options(gen_cmd, "output-len", gen.output_len, output_kind);

  // run / compare / sweep
  ReplayOptions run_opts, cmp_opts, sweep_opts;
  std::string run_policy = "marconi";
  std::vector<std::string> cmp_policies{"marconi", "sglang_plus", "vllm_plus"};
  std::vector<std::string> sweep_policies{"marconi", "sglang_plus", "vllm_plus"};
  std::vector<double> sweep_capacities;

  auto* run_cmd = app.add_subcommand("run", "replay a trace under one policy");
  add_replay_options(run_cmd, run_opts);
  run_cmd->add_option("--policy", run_policy, "marconi|sglang_plus|vllm_plus|no_cache")->capture_default_str();

  auto* cmp_cmd = app.add_subcommand("compare", "replay a trace under several policies");
  add_replay_options(cmp_cmd, cmp_opts);
  cmp_cmd->add_option("--policies", cmp_policies, "comma-separated policies")->delimiter(',')->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "replay policies across cache capacities");
  add_replay_options(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--policies", sweep_policies, "comma-separated policies")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--capacities-gb", sweep_capacities, "comma-separated capacities in GB")
      ->delimiter(',')
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.rounds.kind = parse_length_kind(rounds_kind);
      gen.system_prompt_len.kind = parse_length_kind(prompt_kind);
      gen.user_len.kind = parse_length_kind(user_kind);
      gen.output_len.kind = parse_length_kind(output_kind);
      try {
        gen.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      const Trace trace = generate(gen);
      const fs::path dest(gen_out);
      if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
      save_trace(trace, dest);
      out << "wrote " << trace.size() << " requests to " << gen_out << "\n";
      return kExitOk;
    }

    if (run_cmd->parsed()) {
      const RunConfig cfg = resolve_config(run_opts);
      const PolicyKind kind = parse_policies({run_policy}).front();
      const Trace trace = read_trace(run_opts.trace_path);
      const ReplayConfig rc = make_replay(cfg, kind, cfg.capacity, std::string(to_string(kind)));
      return finish(out, err, sweep(trace, std::span(&rc, 1), 1), run_opts.out_dir, cfg.perf);
    }

    if (cmp_cmd->parsed()) {
      const RunConfig cfg = resolve_config(cmp_opts);
      const auto kinds = parse_policies(cmp_policies);
      const Trace trace = read_trace(cmp_opts.trace_path);
      std::vector<ReplayConfig> configs;
      for (auto k : kinds) configs.push_back(make_replay(cfg, k, cfg.capacity, std::string(to_string(k))));
      return finish(out, err, sweep(trace, configs, cmp_opts.jobs), cmp_opts.out_dir, cfg.perf);
    }

    if (sweep_cmd->parsed()) {
      const RunConfig cfg = resolve_config(sweep_opts);
      const auto kinds = parse_policies(sweep_policies);
      const Trace trace = read_trace(sweep_opts.trace_path);
      std::vector<ReplayConfig> configs;
      for (double gb : sweep_capacities) {
        if (!(gb > 0.0)) throw ConfigError("--capacities-gb values must be > 0");
        const ByteCount cap{static_cast<std::int64_t>(std::llround(gb * 1e9))};
        for (auto k : kinds) {
          configs.push_back(make_replay(cfg, k, cap, std::string(to_string(k)) + "_" + capacity_label(cap)));
        }
      }
      return finish(out, err, sweep(trace, configs, sweep_opts.jobs), sweep_opts.out_dir, cfg.perf);
    }
  } catch (const MissingFile& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::invalid_argument& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitReplayFailed;
  }
  return kExitUsage;
}

}  // namespace marconi
