#include "marconi/workload.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace marconi {

namespace {

// Fresh tokens come from a wide id range so that sharing only happens by
// construction.
constexpr Token kFreshTokenMin = 1024;
constexpr Token kFreshTokenMax = (1 << 30) - 1;

void append_fresh(std::vector<Token>& out, std::int64_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<Token> tok(kFreshTokenMin, kFreshTokenMax);
  for (std::int64_t i = 0; i < n; ++i) out.push_back(tok(rng));
}

void check_dist(const LengthDist& d, const char* name) {
  if (!(d.mean > 0.0)) throw std::invalid_argument(std::string("GeneratorConfig: ") + name + " mean must be > 0");
  if (d.spread < 0.0) throw std::invalid_argument(std::string("GeneratorConfig: ") + name + " spread must be >= 0");
  if (d.min < 1 || d.max < d.min) throw std::invalid_argument(std::string("GeneratorConfig: ") + name + " bounds");
}

}  // namespace

std::vector<Token> Request::full_sequence() const {
  std::vector<Token> seq;
  seq.reserve(input_tokens.size() + output_tokens.size());
  seq.insert(seq.end(), input_tokens.begin(), input_tokens.end());
  seq.insert(seq.end(), output_tokens.begin(), output_tokens.end());
  return seq;
}

std::string to_string(LengthDist::Kind kind) {
  switch (kind) {
    case LengthDist::Kind::constant: return "constant";
    case LengthDist::Kind::uniform: return "uniform";
    case LengthDist::Kind::exponential: return "exponential";
    case LengthDist::Kind::lognormal: return "lognormal";
  }
  return "?";
}

LengthDist::Kind parse_length_kind(const std::string& s) {
  if (s == "constant") return LengthDist::Kind::constant;
  if (s == "uniform") return LengthDist::Kind::uniform;
  if (s == "exponential") return LengthDist::Kind::exponential;
  if (s == "lognormal") return LengthDist::Kind::lognormal;
  throw std::invalid_argument("unknown length distribution '" + s + "'");
}

void GeneratorConfig::validate() const {
  if (n_sessions < 0) throw std::invalid_argument("GeneratorConfig: n_sessions must be >= 0");
  if (!(session_rate > 0.0)) throw std::invalid_argument("GeneratorConfig: session_rate must be > 0");
  if (!(inter_request_delay_s > 0.0)) {
    throw std::invalid_argument("GeneratorConfig: inter_request_delay_s must be > 0");
  }
  if (system_prompt_pool < 1) throw std::invalid_argument("GeneratorConfig: system_prompt_pool must be >= 1");
  check_dist(rounds, "rounds");
  check_dist(system_prompt_len, "system_prompt_len");
  check_dist(user_len, "user_len");
  check_dist(output_len, "output_len");
}

Trace generate(const GeneratorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::vector<Token>> prompts(static_cast<std::size_t>(cfg.system_prompt_pool));
  for (auto& p : prompts) append_fresh(p, sample_length(cfg.system_prompt_len, rng), rng);

  std::exponential_distribution<double> session_gap(cfg.session_rate);
  std::exponential_distribution<double> request_gap(1.0 / cfg.inter_request_delay_s);
  std::uniform_int_distribution<std::size_t> pick_prompt(0, prompts.size() - 1);

  Trace trace;
  double session_start_s = 0.0;
  std::int64_t next_request_id = 0;
  for (std::int64_t s = 0; s < cfg.n_sessions; ++s) {
    session_start_s += session_gap(rng);
    std::vector<Token> history = prompts[pick_prompt(rng)];
    const std::int64_t rounds = sample_length(cfg.rounds, rng);
    double t = session_start_s;
    for (std::int64_t r = 0; r < rounds; ++r) {
      Request req;
      req.session_id = s;
      req.request_id = next_request_id++;
      req.arrival_ms = t * 1000.0;
      req.input_tokens = history;
      append_fresh(req.input_tokens, sample_length(cfg.user_len, rng), rng);
      append_fresh(req.output_tokens, sample_length(cfg.output_len, rng), rng);
      history = req.full_sequence();
      trace.push_back(std::move(req));
      t += request_gap(rng);
    }
  }
  std::stable_sort(trace.begin(), trace.end(), [](const Request& a, const Request& b) {
    if (a.arrival_ms != b.arrival_ms) return a.arrival_ms < b.arrival_ms;
    if (a.session_id != b.session_id) return a.session_id < b.session_id;
    return a.request_id < b.request_id;
  });
  return trace;
}

namespace {

nlohmann::json to_json(const Request& r) {
  nlohmann::json j;
  j["session_id"] = r.session_id;
  j["request_id"] = r.request_id;
  j["arrival_ms"] = r.arrival_ms;
  j["input_tokens"] = r.input_tokens;
  j["output_tokens"] = r.output_tokens;
  return j;
}

Request from_json(const nlohmann::json& j) {
  static const char* const kFields[] = {"session_id", "request_id", "arrival_ms", "input_tokens", "output_tokens"};
  if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
  for (const char* f : kFields) {
    if (!j.contains(f)) throw std::invalid_argument(std::string("missing field '") + f + "'");
  }
  if (j.size() != std::size(kFields)) {
    for (const auto& [key, _] : j.items()) {
      if (std::find_if(std::begin(kFields), std::end(kFields), [&](const char* f) { return key == f; }) ==
          std::end(kFields)) {
        throw std::invalid_argument("unknown field '" + key + "'");
      }
    }
  }
  if (!j["session_id"].is_number_integer() || !j["request_id"].is_number_integer()) {
    throw std::invalid_argument("session_id and request_id must be integers");
  }
  if (!j["arrival_ms"].is_number() || j["arrival_ms"].get<double>() < 0.0) {
    throw std::invalid_argument("arrival_ms must be a non-negative number");
  }
  Request r;
  r.session_id = j["session_id"].get<std::int64_t>();
  r.request_id = j["request_id"].get<std::int64_t>();
  r.arrival_ms = j["arrival_ms"].get<double>();
  for (const char* f : {"input_tokens", "output_tokens"}) {
    const auto& arr = j[f];
    if (!arr.is_array()) throw std::invalid_argument(std::string(f) + " must be an array");
    auto& dst = std::string_view(f) == "input_tokens" ? r.input_tokens : r.output_tokens;
    dst.reserve(arr.size());
    for (const auto& t : arr) {
      if (!t.is_number_integer()) throw std::invalid_argument(std::string(f) + " must hold integers");
      dst.push_back(t.get<Token>());
    }
  }
  return r;
}

}  // namespace

Trace parse_trace(std::istream& in) {
  Trace trace;
  std::map<std::int64_t, double> last_arrival;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Request r;
    try {
      r = from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, fresh] = last_arrival.try_emplace(r.session_id, r.arrival_ms);
    if (!fresh) {
      if (r.arrival_ms < it->second) {
        throw std::runtime_error("trace line " + std::to_string(line_no) + ": arrival_ms decreases within session " +
                                 std::to_string(r.session_id));
      }
      it->second = r.arrival_ms;
    }
    trace.push_back(std::move(r));
  }
  return trace;
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace " + path.string());
  return parse_trace(in);
}

void write_trace(const Trace& trace, std::ostream& out) {
  for (const auto& r : trace) out << to_json(r).dump() << '\n';
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace " + path.string());
  write_trace(trace, out);
  if (!out) throw std::runtime_error("failed writing trace " + path.string());
}

}  // namespace marconi
