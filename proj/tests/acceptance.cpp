// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "marconi/cost_model.hpp"
#include "marconi/engine.hpp"
#include "marconi/policies.hpp"
#include "marconi/radix_cache.hpp"
#include "marconi/workload.hpp"
#include "oracles.hpp"

using namespace marconi;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Verdict()> run;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

bool close_rel(double got, double want) {
  const double scale = std::max(std::abs(got), std::abs(want));
  return std::abs(got - want) <= 8 * std::numeric_limits<double>::epsilon() * scale;
}

ModelConfig with_layers(std::int64_t attn, std::int64_t ssm, std::int64_t mlp) {
  ModelConfig m = ModelConfig::hybrid_7b();
  m.n_attention_layers = attn;
  m.n_ssm_layers = ssm;
  m.n_mlp_layers = mlp;
  return m;
}

ModelConfig with_state(std::int64_t n) {
  ModelConfig m = ModelConfig::hybrid_7b();
  m.d_state = n;
  m.conv_in_channels = ModelConfig::default_conv_in_channels(m.d_model, n);
  return m;
}

double ratio(double a, double b) { return b > 0.0 ? a / b : std::numeric_limits<double>::infinity(); }

// ---------------------------------------------------------------------------

Verdict formula_goldens() {
  const ModelConfig m = ModelConfig::hybrid_7b();
  const double d = static_cast<double>(m.d_model);
  const double n = static_cast<double>(m.d_state);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> len(1, 1'000'000);
  std::size_t bad = 0;
  double worst_ssm_vs_200 = 0.0;
  for (int i = 0; i < 20'000; ++i) {
    const std::int64_t l = i == 0 ? 1 : (i == 1 ? 1'000'000 : len(rng));
    const double ld = static_cast<double>(l);
    const double attn = attention_flops(l, m).value / kv_bytes(l, m).value;
    const double ssm = ssm_flops(l, m).value / ssm_state_bytes(m).value;
    bad += !close_rel(attn, ld + 2.0 * d);
    bad += !close_rel(attn, ld + 8192.0);
    bad += !close_rel(ssm, ld * (6.0 * d / n + 8.0 + 5.0 / (d * n)));
    worst_ssm_vs_200 = std::max(worst_ssm_vs_200, std::abs(ssm / (200.0 * ld) - 1.0));
    bad += !close_rel(attention_flops(l, m).value, 8.0 * ld * d * d + 4.0 * ld * ld * d);
    bad += !close_rel(ssm_flops(l, m).value, 12.0 * ld * d * d + 16.0 * ld * d * n + 10.0 * ld);
    bad += !close_rel(mlp_flops(l, m).value, 16.0 * ld * d * d);
  }
  const bool approx = worst_ssm_vs_200 < 0.01;
  return {bad == 0 && approx, std::to_string(bad) + " mismatches over 20000 lengths; SSM/(200L) off by at most " +
                                  fmt("%.4f", worst_ssm_vs_200)};
}

Verdict memory_blowup() {
  const ModelConfig m = ModelConfig::hybrid_7b();
  PolicyConfig p = PolicyConfig::of(PolicyKind::vllm_plus);
  p.block_size = 16;
  Request r;
  r.session_id = r.request_id = 1;
  for (Token t = 0; t < 10'000; ++t) r.input_tokens.push_back(t);

  RadixCache tree(m, p.block_size);
  tree.insert(r.full_sequence(), plan_admission_vllm_plus(r, p).checkpoints());

  CacheSimulator sim(m, p, ByteCount{1'000'000'000'000});
  sim.process(r);

  const double gb = static_cast<double>(tree.total_bytes().value) / 1e9;
  const bool ok = std::abs(gb / 17.4 - 1.0) <= 0.15 && sim.cache().total_bytes() == tree.total_bytes();
  return {ok, fmt("%.3f GB cached (target 17.4 GB +-15%%)", gb)};
}

Verdict size_ratio() {
  const ModelConfig m = ModelConfig::hybrid_7b();
  const ByteCount state = ssm_state_bytes(m);
  const ByteCount block_kv = kv_bytes(16, m);
  const bool ok = state.value == 4 * block_kv.value && m.d_state / (2 * 16) == 4;
  return {ok, std::to_string(state.value) + " B state / " + std::to_string(block_kv.value) + " B block KV"};
}

Verdict lru_collapse() {
  std::mt19937_64 rng(4);
  std::size_t evictions = 0;
  std::size_t mismatched = 0;
  for (int i = 0; i < 100; ++i) {
    GeneratorConfig g;
    g.n_sessions = std::uniform_int_distribution<std::int64_t>(10, 40)(rng);
    g.system_prompt_pool = std::uniform_int_distribution<std::int64_t>(1, 6)(rng);
    g.system_prompt_len = LengthDist::uniform(300.0, 0.5);
    g.user_len = LengthDist::lognormal(80.0, 1.0);
    g.output_len = LengthDist::exponential(40.0);
    g.seed = rng();
    const Trace t = generate(g);
    const ByteCount cap{std::uniform_int_distribution<std::int64_t>(150'000'000, 1'500'000'000)(rng)};

    PolicyConfig p = PolicyConfig::of(PolicyKind::marconi);
    p.alpha = 0.0;
    p.tuner.enabled = false;
    CacheSimulator flop_aware(ModelConfig::hybrid_7b(), p, cap);
    CacheSimulator reference(ModelConfig::hybrid_7b(), p, cap);
    reference.set_victim_selector([](const RadixCache& tree) { return oracle::reference_lru(tree); });
    bool same = true;
    for (const Request& r : t) same &= flop_aware.process(r).reuse_len == reference.process(r).reuse_len;
    same &= flop_aware.evicted_ordinals() == reference.evicted_ordinals();
    mismatched += !same;
    evictions += flop_aware.evicted_ordinals().size();
  }
  return {mismatched == 0 && evictions > 0,
          std::to_string(mismatched) + "/100 traces differ; " + std::to_string(evictions) + " evictions compared"};
}

Verdict third_occurrence() {
  const ModelConfig m = ModelConfig::hybrid_7b();
  std::ostringstream detail;
  bool ok = true;
  for (const std::int64_t prompt : {1000, 1234}) {
    GeneratorConfig g;
    g.n_sessions = 3;
    g.rounds = LengthDist::constant(1.0);
    g.system_prompt_pool = 1;
    g.system_prompt_len = LengthDist::constant(static_cast<double>(prompt));
    g.user_len = LengthDist::lognormal(60.0, 1.0);
    g.output_len = LengthDist::exponential(30.0);
    g.seed = static_cast<std::uint64_t>(prompt);
    const Trace t = generate(g);
    if (t.size() != 3) return {false, "expected 3 requests"};

    auto hits = [&](PolicyConfig p) {
      CacheSimulator sim(m, p, ByteCount{1'000'000'000'000});
      std::vector<std::int64_t> h;
      for (const Request& r : t) h.push_back(sim.process(r).reuse_len);
      return h;
    };
    PolicyConfig aligned = PolicyConfig::of(PolicyKind::marconi);
    aligned.chunk_align = true;
    const std::int64_t floor_block = prompt / 32 * 32;
    for (const auto& p : {PolicyConfig::of(PolicyKind::marconi), aligned}) {
      const auto h = hits(p);
      ok &= h[0] == 0 && h[1] == 0 && h[2] >= prompt - m.chunk_size;
      detail << "marconi" << (p.chunk_align ? "+align" : "") << "(" << h[0] << "," << h[1] << "," << h[2] << ") ";
    }
    const auto v = hits(PolicyConfig::of(PolicyKind::vllm_plus));
    ok &= v == std::vector<std::int64_t>{0, floor_block, floor_block};
    detail << "vllm+(" << v[0] << "," << v[1] << "," << v[2] << ") @" << prompt << "; ";
  }
  return {ok, detail.str()};
}

// Shared workload for the policy-level criteria.
struct Workload {
  Trace trace;
  ByteCount base;
  double marconi_hit = 0.0;
};

const Workload& workload() {
  static const Workload w = [] {
    Workload out;
    out.trace = generate(GeneratorConfig{});
    // Capacity whose Marconi hit rate is closest to 30%.
    std::vector<ReplayConfig> configs;
    for (const double gb : {0.25, 0.35, 0.5, 0.7, 1.0}) {
      configs.push_back({fmt("%g", gb), PolicyConfig::of(PolicyKind::marconi), ModelConfig::hybrid_7b(),
                         ByteCount{static_cast<std::int64_t>(gb * 1e9)}, PerfModel{}});
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : sweep(out.trace, configs)) {
      const double gap = std::abs(r.metrics.token_hit_rate - 0.30);
      if (r.ok && gap < best) {
        best = gap;
        out.base = r.metrics.capacity;
        out.marconi_hit = r.metrics.token_hit_rate;
      }
    }
    return out;
  }();
  return w;
}

std::vector<double> hit_rates(const Trace& t, const std::vector<ReplayConfig>& configs) {
  std::vector<double> out;
  for (const auto& r : sweep(t, configs)) out.push_back(r.ok ? r.metrics.token_hit_rate : -1.0);
  return out;
}

std::vector<ReplayConfig> three_policies(const ModelConfig& m, ByteCount cap) {
  std::vector<ReplayConfig> c;
  for (auto k : {PolicyKind::marconi, PolicyKind::sglang_plus, PolicyKind::vllm_plus}) {
    c.push_back({std::string(to_string(k)), PolicyConfig::of(k), m, cap, PerfModel{}});
  }
  return c;
}

Verdict policy_ordering() {
  const Workload& w = workload();
  const auto h = hit_rates(w.trace, three_policies(ModelConfig::hybrid_7b(), w.base));
  const double mv = ratio(h[0], h[2]);
  const double ms = ratio(h[0], h[1]);
  const bool ok = h[0] > h[1] && h[1] > h[2] && mv >= 2.0 && ms >= 1.1;
  std::ostringstream d;
  d << w.trace.size() << " requests @" << fmt("%.2f", w.base.value / 1e9) << " GB: marconi " << fmt("%.3f", h[0])
    << " sglang+ " << fmt("%.3f", h[1]) << " vllm+ " << fmt("%.3f", h[2]) << "; M/V " << fmt("%.2f", mv) << " M/S "
    << fmt("%.3f", ms);
  return {ok, d.str()};
}

Verdict contention_shape() {
  const Workload& w = workload();
  const std::vector<std::int64_t> factors{1, 2, 4, 8, 16};  // base/2 .. base*8
  std::vector<ReplayConfig> configs;
  for (const auto f : factors) {
    const ByteCount cap{w.base.value * f / 2};
    for (auto& c : three_policies(ModelConfig::hybrid_7b(), cap)) {
      if (c.policy.kind != PolicyKind::vllm_plus) configs.push_back(c);
    }
  }
  const auto h = hit_rates(w.trace, configs);
  std::vector<double> gain;
  std::ostringstream d;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    gain.push_back(ratio(h[2 * i], h[2 * i + 1]) - 1.0);
    d << fmt("%.3g", w.base.value * factors[i] / 2 / 1e9) << "GB:" << fmt("%+.1f%% ", 100.0 * gain.back());
  }
  const auto peak = static_cast<std::size_t>(std::max_element(gain.begin(), gain.end()) - gain.begin());
  d << "peak at point " << peak + 1 << "/5";
  return {peak != 0 && peak + 1 != gain.size(), d.str()};
}

Verdict architecture_sensitivity() {
  const Workload& w = workload();
  const ByteCount cap{w.base.value * 2};
  std::vector<ModelConfig> models{with_layers(12, 24, 28), with_layers(6, 24, 28), with_layers(3, 24, 28),
                                  with_state(16),          with_state(64),         with_state(128),
                                  with_layers(32, 0, 32)};
  std::vector<ReplayConfig> configs;
  for (const auto& m : models) {
    for (auto& c : three_policies(m, cap)) configs.push_back(c);
  }
  const auto results = sweep(w.trace, configs);
  std::vector<double> mv;
  for (std::size_t i = 0; i + 3 < results.size(); i += 3) {
    mv.push_back(ratio(results[i].metrics.token_hit_rate, results[i + 2].metrics.token_hit_rate));
  }
  const bool ratio_trend = mv[0] < mv[1] && mv[1] < mv[2];
  const bool state_trend = mv[3] < mv[4] && mv[4] < mv[5];

  const PolicyConfig block_policy = PolicyConfig::of(PolicyKind::vllm_plus);
  std::size_t disagree = 0;
  const std::size_t tf = results.size() - 3;
  for (std::size_t r = 0; r < w.trace.size(); ++r) {
    std::vector<std::int64_t> reuse;
    for (std::size_t k = 0; k < 3; ++k) reuse.push_back(results[tf + k].metrics.outcomes[r].reuse_len);
    const auto [lo, hi] = std::minmax_element(reuse.begin(), reuse.end());
    disagree += *hi - *lo >= block_policy.block_size;
  }

  std::ostringstream d;
  d << "@" << fmt("%.2f", cap.value / 1e9) << " GB; M/V attn:ssm 1:2,1:4,1:8 = " << fmt("%.2f", mv[0]) << ","
    << fmt("%.2f", mv[1]) << "," << fmt("%.2f", mv[2]) << (ratio_trend ? " (up)" : " (NOT up)") << "; N 16,64,128 = "
    << fmt("%.2f", mv[3]) << "," << fmt("%.2f", mv[4]) << "," << fmt("%.2f", mv[5])
    << (state_trend ? " (up)" : " (NOT up)") << "; transformer: " << disagree << "/" << w.trace.size()
    << " requests differ by a block or more (hit rates " << fmt("%.3f", results[tf].metrics.token_hit_rate) << "/"
    << fmt("%.3f", results[tf + 1].metrics.token_hit_rate) << "/" << fmt("%.3f", results[tf + 2].metrics.token_hit_rate)
    << ")";
  return {ratio_trend && state_trend && disagree == 0, d.str()};
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(9);
  std::vector<PolicyConfig> policies;
  for (auto k : {PolicyKind::marconi, PolicyKind::sglang_plus, PolicyKind::vllm_plus, PolicyKind::no_cache}) {
    policies.push_back(PolicyConfig::of(k));
  }
  policies.push_back(PolicyConfig::of(PolicyKind::marconi));
  policies.back().chunk_align = true;
  policies.push_back(PolicyConfig::of(PolicyKind::vllm_plus));
  policies.back().block_size = 4;

  ModelConfig hybrid = ModelConfig::hybrid_7b();
  hybrid.chunk_size = 8;
  const std::vector<ModelConfig> models{hybrid, with_layers(32, 0, 32)};

  std::size_t requests = 0;
  std::size_t mismatched = 0;
  for (int i = 0; i < 500; ++i) {
    const Trace t = oracle::micro_trace(rng);
    const PolicyConfig& p = policies[static_cast<std::size_t>(i) % policies.size()];
    const ModelConfig& m = models[static_cast<std::size_t>(i / policies.size()) % models.size()];
    oracle::FlatCache flat(m, p);
    CacheSimulator sim(m, p, ByteCount{std::numeric_limits<std::int64_t>::max() / 4});
    for (const Request& r : t) {
      mismatched += sim.process(r).reuse_len != flat.process(r);
      ++requests;
    }
  }
  return {mismatched == 0, std::to_string(mismatched) + "/" + std::to_string(requests) + " requests differ"};
}

Verdict conservation() {
  std::size_t failures = 0;
  std::size_t checks = 0;
  for (const std::int64_t block : {1, 4}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(block) * 17);
    std::uniform_int_distribution<Token> tok(1, 4);
    RadixCache t(ModelConfig::hybrid_7b(), block);
    for (int i = 0; i < 10'000; ++i) {
      const int op = std::uniform_int_distribution<int>(0, 9)(rng);
      if (op < 5) {
        std::vector<Token> s(std::uniform_int_distribution<std::size_t>(1, 24)(rng));
        for (auto& x : s) x = tok(rng);
        const auto len = static_cast<std::int64_t>(s.size());
        std::vector<CheckpointRequest> cps;
        if (block == 1) {
          const auto extra = std::uniform_int_distribution<std::int64_t>(1, len)(rng);
          cps = {CheckpointRequest::at(len), {extra, std::uniform_int_distribution<std::int64_t>(1, extra)(rng)}};
        } else {
          for (std::int64_t b = block; b <= len; b += block) cps.push_back(CheckpointRequest::at(b));
          cps.push_back(CheckpointRequest::at(len));
        }
        t.insert(s, cps);
      } else if (op < 8) {
        const auto cands = t.evict_candidates();
        if (!cands.empty()) t.remove_node(cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)]);
      } else {
        std::vector<Token> q(std::uniform_int_distribution<std::size_t>(0, 24)(rng));
        for (auto& x : q) x = tok(rng);
        t.lookup(q);
      }
      failures += t.total_bytes() != t.recompute_total_bytes();
      ++checks;
    }
  }

  GeneratorConfig g;
  g.n_sessions = 60;
  const Trace trace = generate(g);
  const ByteCount cap{600'000'000};
  for (auto k : {PolicyKind::marconi, PolicyKind::sglang_plus, PolicyKind::vllm_plus}) {
    CacheSimulator sim(ModelConfig::hybrid_7b(), PolicyConfig::of(k), cap);
    for (const Request& r : trace) {
      const auto o = sim.process(r);
      failures += o.cache_bytes_after > cap || sim.cache().total_bytes() > cap ||
                  sim.cache().total_bytes() != sim.cache().recompute_total_bytes();
      ++checks;
    }
  }
  return {failures == 0, std::to_string(failures) + " violations in " + std::to_string(checks) + " checks"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "formula goldens", 1.0, formula_goldens},
      {2, "memory blowup at 10K tokens", 1.0, memory_blowup},
      {3, "state to block-KV size ratio", 1.0, size_ratio},
      {4, "LRU collapse at alpha 0", 10.0, lru_collapse},
      {5, "third-occurrence rule", 5.0, third_occurrence},
      {6, "policy ordering", 300.0, policy_ordering},
      {7, "contention shape", 600.0, contention_shape},
      {8, "architecture sensitivity", 600.0, architecture_sensitivity},
      {9, "oracle equivalence", 30.0, oracle_equivalence},
      {10, "byte conservation", 30.0, conservation},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      v.pass = false;
      v.detail += "; over time budget";
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " (" << fmt("%.2f", secs)
              << " s): " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
