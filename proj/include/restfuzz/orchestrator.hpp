#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "restfuzz/checkers.hpp"
#include "restfuzz/grammar.hpp"
#include "restfuzz/http.hpp"
#include "restfuzz/recommender.hpp"
#include "restfuzz/request_generator.hpp"
#include "restfuzz/sequence_engine.hpp"

namespace restfuzz {

enum class FuzzMode { Miner, Baseline, SeqOnly, ModelOnly, Rec1, RecList };

std::string_view to_string(FuzzMode mode);
FuzzMode parse_fuzz_mode(std::string_view text);
bool uses_seed_selection(FuzzMode mode);
RenderMode render_mode_for(FuzzMode mode);
bool uses_model(FuzzMode mode);

class TargetUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoResponses : public std::domain_error {
 public:
  NoResponses() : std::domain_error("no HTTP responses") {}
};

struct ResponseCounts {
  std::uint64_t pass2xx = 0;
  std::uint64_t reject4xx = 0;
  std::uint64_t error5xx = 0;
  std::uint64_t transport = 0;

  void add(ResponseClass cls);
  std::uint64_t total() const { return pass2xx + reject4xx + error5xx + transport; }
};

// (2xx + 5xx) / (2xx + 4xx + 5xx). Transport failures are not HTTP responses.
double pass_rate(const ResponseCounts& counts);

enum class ErrorKind { Response5xx, IncorrectParamUsage, UseAfterFree };
std::string_view to_string(ErrorKind kind);

// Lowercased body with hex ids (8+ hex chars) and digits removed, FNV-1a hashed.
std::uint64_t body_signature(std::string_view body);

struct BucketKey {
  std::string template_id;
  int status = 0;
  ErrorKind kind = ErrorKind::Response5xx;
  std::uint64_t signature = 0;

  auto operator<=>(const BucketKey&) const = default;
};

std::string bucket_name(const BucketKey& key);

struct ErrorRecord {
  BucketKey key;
  std::string replay_file;  // empty when no report directory is set
  std::uint64_t first_seen_iteration = 0;
  std::uint64_t hits = 0;
  std::vector<ReadyRequest> replay;
  std::vector<ResponseClass> classes;  // as observed when first bucketed
  nlohmann::json detail = nlohmann::json::object();
};

nlohmann::json to_json(const ErrorRecord& record);

class ErrorBuckets {
 public:
  // Replay files go to `<replay_dir>/<bucket>.jsonl` when a directory is given.
  explicit ErrorBuckets(std::optional<std::string> replay_dir = std::nullopt);

  // `failing` indexes the request that produced the error. Returns true for a
  // new bucket.
  bool bucket_error(const std::vector<ReadyRequest>& replay,
                    const std::vector<ResponseRecord>& responses, std::size_t failing,
                    ErrorKind kind, std::uint64_t iteration,
                    nlohmann::json detail = nlohmann::json::object());

  const std::map<BucketKey, ErrorRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::optional<std::string> replay_dir_;
  std::map<BucketKey, ErrorRecord> records_;
};

struct RunMetrics {
  ResponseCounts counts;
  // Responses after the first training trigger (the whole run if none fired).
  ResponseCounts counts_after_warmup;
  bool warmed_up = false;
  std::set<std::string> success_templates;
  std::map<std::size_t, std::uint64_t> length_histogram;  // executed sequences only
  std::uint64_t iterations = 0;
  std::uint64_t requests = 0;
  std::uint64_t training_iterations = 0;
  std::size_t unique_errors = 0;
  std::size_t seeds = 0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

std::size_t unique_request_templates(const RunMetrics& metrics);
// Median of the length histogram; nullopt when empty.
std::optional<double> median_length(const RunMetrics& metrics);

struct FuzzConfig {
  FuzzMode mode = FuzzMode::Miner;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> max_requests;
  std::optional<double> duration_seconds;
  std::optional<std::uint64_t> max_iterations;
  // Asynchronous retraining on wall-clock time.
  double train_interval_seconds = 7200.0;
  // Synchronous retraining every N sent requests; replaces the interval.
  std::optional<std::uint64_t> train_every_requests;
  bool enable_uaf_checker = false;
  bool enable_datadriven_checker = false;
  std::size_t max_sequence_length = 10;
  std::size_t snapshot_cap = 64;
  RecommenderConfig recommender;
  std::map<std::string, std::string> headers;
  std::optional<std::string> report_dir;
  std::optional<std::string> dump_weights_dir;
  std::optional<std::string> journal_file;
  bool record_stream = false;  // keep every executed candidate in the result
  std::ostream* log = nullptr;
};

struct FuzzResult {
  RunMetrics metrics;
  std::vector<ErrorRecord> errors;
  std::vector<SequenceTemplate> executed;  // only with record_stream
};

FuzzResult fuzz_loop(const CompiledGrammar& grammar, Client& client, const FuzzConfig& config);

// Re-sends a stored replay file and compares response classes with the ones
// recorded in it.
struct ReplayReport {
  std::vector<ResponseClass> expected;
  std::vector<ResponseRecord> responses;
  bool matches() const;
};

ReplayReport replay_file(const std::string& path, Client& client);

}  // namespace restfuzz
