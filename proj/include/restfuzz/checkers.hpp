#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "restfuzz/collection_store.hpp"
#include "restfuzz/grammar.hpp"
#include "restfuzz/http.hpp"
#include "restfuzz/request_generator.hpp"

namespace restfuzz {

enum class ViolationKind { IncorrectParamUsage, UseAfterFree };
std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind = ViolationKind::IncorrectParamUsage;
  std::vector<ReadyRequest> replay;  // every request of the checker run, as sent
  std::vector<ResponseRecord> responses;
  std::size_t offending = 0;  // index into replay
  std::optional<ParamValuePair> injected;
  std::optional<std::string> deleted_id;

  const ReadyRequest& offending_request() const { return replay.at(offending); }
  const ResponseRecord& response() const { return responses.at(offending); }
};

// Outcome of one checker attempt. `sent` and `responses` list every request the
// checker issued, violation or not.
struct CheckResult {
  std::optional<Violation> violation;
  std::vector<ReadyRequest> sent;
  std::vector<ResponseRecord> responses;
  bool ran = false;
};

// Re-sends the executed sequence with one undefined pair added to its last
// request (query for GET/DELETE, body for POST/PUT). Runs only when the
// original sequence completed and its last response was 2xx.
CheckResult datadriven_check(const ExecutedSequence& executed, const CompiledGrammar& grammar,
                             const CollectionStore& store, Rng& rng, const SendFn& send);

// Places `pair` into `request` by method convention.
ReadyRequest inject_pair(ReadyRequest request, const ParamValuePair& pair);

class SetupFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UafTriple {
  std::string resource_type;
  std::string create;  // POST producer
  std::string remove;  // DELETE consumer
  std::string access;  // GET consumer
};

// Every (POST producer, DELETE consumer, GET consumer) combination per
// resource type, ordered by type then template ids.
std::vector<UafTriple> uaf_triples(const CompiledGrammar& grammar);

// create -> delete -> access, all rendered with defaults. Producers needed by
// the create request are set up first. Throws SetupFailed when a setup,
// create or delete request is not 2xx; `partial` then holds what was sent.
CheckResult use_after_free_check(const CompiledGrammar& grammar, const UafTriple& triple,
                                 const SendFn& send,
                                 const std::map<std::string, std::string>& headers = {},
                                 CheckResult* partial = nullptr);

// Round-robin over the grammar's triples.
class UafRotation {
 public:
  explicit UafRotation(const CompiledGrammar& grammar) : triples_(uaf_triples(grammar)) {}
  bool empty() const { return triples_.empty(); }
  const UafTriple& next();
  const std::vector<UafTriple>& triples() const { return triples_; }

 private:
  std::vector<UafTriple> triples_;
  std::size_t cursor_ = 0;
};

}  // namespace restfuzz
