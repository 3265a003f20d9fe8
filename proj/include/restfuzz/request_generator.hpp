#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "restfuzz/collection_store.hpp"
#include "restfuzz/grammar.hpp"
#include "restfuzz/http.hpp"
#include "restfuzz/sequence_engine.hpp"

namespace restfuzz {

class MissingProducerId : public std::runtime_error {
 public:
  explicit MissingProducerId(const std::string& type)
      : std::runtime_error("no produced id of type '" + type + "'"), resource_type(type) {}
  std::string resource_type;
};

class ForeignPair : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A generated mutation list for one request template.
struct ParamValueList {
  std::string template_id;
  std::vector<ParamValuePair> pairs;

  auto operator<=>(const ParamValueList&) const = default;
};

// Throws ForeignPair when a pair names an undefined or consumer parameter of
// the template, or a parameter appears twice.
void validate_list(const RequestTemplate& tmpl, const ParamValueList& list);

// Object ids produced during one sequence execution.
class ObjectIdPool {
 public:
  struct Entry {
    std::string value;
    std::string template_id;
    std::size_t step = 0;
  };

  void add(const std::string& type, Entry entry) { ids_[type].push_back(std::move(entry)); }
  bool has(const std::string& type) const;
  const std::vector<Entry>& ids(const std::string& type) const;
  void clear() { ids_.clear(); }

 private:
  std::map<std::string, std::vector<Entry>> ids_;
};

// Most recently produced id of the consumed type.
const ObjectIdPool::Entry& resolve_consumer(const ParamSpec& param, const ObjectIdPool& pool);

ReadyRequest render_traditional(const RequestTemplate& tmpl, const ObjectIdPool& pool, Rng& rng);
// Defaults for every non-consumer parameter, overridden by the list's pairs.
ReadyRequest render_with_list(const RequestTemplate& tmpl, const ParamValueList& list,
                              const ObjectIdPool& pool);
ReadyRequest render_defaults(const RequestTemplate& tmpl, const ObjectIdPool& pool);

// Uniform choice; nullopt when `lists` is empty.
std::optional<ParamValueList> choose_list(const std::vector<ParamValueList>& lists, Rng& rng);

std::vector<std::pair<std::string, std::string>> extract_producer_ids(const RequestTemplate& tmpl,
                                                                       const std::string& body);

// Rendered value of every template parameter, keyed by parameter name.
std::map<std::string, std::string> rendered_values(const ReadyRequest& request);

// Published param-value lists per template. Readers get an immutable snapshot.
using ListSnapshot = std::map<std::string, std::vector<ParamValueList>>;

class SnapshotStore {
 public:
  explicit SnapshotStore(std::size_t per_template_cap = 64) : cap_(per_template_cap) {}

  std::shared_ptr<const ListSnapshot> current() const;
  // Union with the current snapshot; duplicates ignored, oldest evicted past the cap.
  void publish(const ListSnapshot& lists);
  std::size_t size() const;
  std::size_t publications() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ListSnapshot> snapshot_ = std::make_shared<ListSnapshot>();
  std::size_t cap_;
  std::size_t publications_ = 0;
};

enum class RenderMode { Traditional, Rec1, RecList, Model };

struct ExecutedSequence {
  SequenceTemplate candidate;
  std::vector<ReadyRequest> requests;
  std::vector<ResponseRecord> responses;
  std::vector<ExecutedStep> steps;
  bool aborted = false;  // a consumer found no produced id

  std::vector<ResponseClass> classes() const;
};

using SendFn = std::function<ResponseRecord(const ReadyRequest&)>;

struct RenderContext {
  const CompiledGrammar& grammar;
  RenderMode mode = RenderMode::Traditional;
  std::shared_ptr<const ListSnapshot> lists;  // Model mode
  const CollectionStore* store = nullptr;     // Rec1 / RecList modes
  std::map<std::string, std::string> headers;
};

// Renders and sends the candidate request by request. The first n-1 requests
// follow the render mode, the last is always rendered traditionally. Ids from
// 2xx producer responses enter the pool before the next request is rendered.
ExecutedSequence render_sequence(const SequenceTemplate& candidate, const RenderContext& ctx,
                                 Rng& rng, const SendFn& send);

// Re-sends previously rendered requests, rebinding consumer ids to the ids
// produced during this execution.
struct ReplayOutcome {
  std::vector<ReadyRequest> sent;
  std::vector<ResponseRecord> responses;
};
ReplayOutcome replay_requests(const std::vector<ReadyRequest>& requests, const SendFn& send);

}  // namespace restfuzz
