#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "marconi/radix_cache.hpp"

namespace marconi {

struct Request {
  std::int64_t session_id = 0;
  std::int64_t request_id = 0;
  double arrival_ms = 0.0;
  std::vector<Token> input_tokens;
  std::vector<Token> output_tokens;

  /// input ++ output: the sequence cached once the request completes.
  std::vector<Token> full_sequence() const;
  std::int64_t input_len() const { return static_cast<std::int64_t>(input_tokens.size()); }
  std::int64_t total_len() const {
    return static_cast<std::int64_t>(input_tokens.size() + output_tokens.size());
  }

  bool operator==(const Request&) const = default;
};

using Trace = std::vector<Request>;

struct LengthDist {
  enum class Kind { constant, uniform, exponential, lognormal };
  Kind kind = Kind::constant;
  double mean = 1.0;
  // lognormal: sigma of the underlying normal. uniform: half-width as a
  // fraction of the mean.
  double spread = 0.0;
  std::int64_t min = 1;
  std::int64_t max = 1 << 20;

  static LengthDist constant(double mean) { return {Kind::constant, mean, 0.0}; }
  static LengthDist uniform(double mean, double half_width_frac) { return {Kind::uniform, mean, half_width_frac}; }
  static LengthDist exponential(double mean) { return {Kind::exponential, mean, 0.0}; }
  static LengthDist lognormal(double mean, double sigma) { return {Kind::lognormal, mean, sigma}; }

  bool operator==(const LengthDist&) const = default;
};

std::string to_string(LengthDist::Kind kind);
LengthDist::Kind parse_length_kind(const std::string& s);

struct GeneratorConfig {
  std::int64_t n_sessions = 300;
  double session_rate = 1.0;           // sessions per second, Poisson arrivals
  double inter_request_delay_s = 5.0;  // mean of an exponential gap
  LengthDist rounds = LengthDist::exponential(2.0);
  std::int64_t system_prompt_pool = 8;
  LengthDist system_prompt_len = LengthDist::uniform(1000.0, 0.5);
  LengthDist user_len = LengthDist::lognormal(100.0, 1.5);
  LengthDist output_len = LengthDist::exponential(50.0);
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on non-positive rates or lengths.
  void validate() const;
};

/// Multi-turn trace: each session opens with a shared system prompt and each
/// round's input is the full prior history plus fresh user tokens. The
/// result is sorted by (arrival_ms, session_id, request_id).
Trace generate(const GeneratorConfig& cfg);

/// Draws one length. Exposed for distribution tests.
template <class Rng>
std::int64_t sample_length(const LengthDist& d, Rng& rng);

/// JSONL, one request per line with exactly the Request fields.
/// Errors carry the 1-based line number.
Trace load_trace(const std::filesystem::path& path);
Trace parse_trace(std::istream& in);
void save_trace(const Trace& trace, const std::filesystem::path& path);
void write_trace(const Trace& trace, std::ostream& out);

}  // namespace marconi

#include "marconi/detail/sample_length.hpp"
