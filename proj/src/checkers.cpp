#include "restfuzz/checkers.hpp"

#include <algorithm>
#include <set>

namespace restfuzz {

std::string_view to_string(ViolationKind kind) {
  return kind == ViolationKind::UseAfterFree ? "UseAfterFree" : "IncorrectParamUsage";
}

ReadyRequest inject_pair(ReadyRequest request, const ParamValuePair& pair) {
  if (request.method == HttpMethod::Get || request.method == HttpMethod::Delete)
    request.query[pair.param_name] = pair.value;
  else
    request.body[pair.param_name] = pair.value;
  return request;
}

CheckResult datadriven_check(const ExecutedSequence& executed, const CompiledGrammar& grammar,
                             const CollectionStore& store, Rng& rng, const SendFn& send) {
  CheckResult out;
  if (executed.aborted || executed.requests.empty() ||
      executed.requests.size() != executed.candidate.length())
    return out;
  if (executed.responses.back().cls != ResponseClass::Pass2xx) return out;

  const auto& last = grammar.at(executed.requests.back().template_id);
  const auto pairs = store.undefined_pairs_for(last);
  if (pairs.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  const auto& pair = pairs[pick(rng)];

  auto requests = executed.requests;
  requests.back() = inject_pair(std::move(requests.back()), pair);
  auto replay = replay_requests(requests, send);
  out.ran = true;
  out.sent = replay.sent;
  out.responses = replay.responses;
  if (!out.responses.empty() && out.responses.size() == requests.size() &&
      out.responses.back().cls == ResponseClass::Error5xx) {
    Violation v;
    v.kind = ViolationKind::IncorrectParamUsage;
    v.replay = std::move(replay.sent);
    v.responses = std::move(replay.responses);
    v.offending = v.replay.size() - 1;
    v.injected = pair;
    out.violation = std::move(v);
  }
  return out;
}

std::vector<UafTriple> uaf_triples(const CompiledGrammar& grammar) {
  std::vector<UafTriple> out;
  for (const auto& type : grammar.resource_types) {
    std::vector<std::string> creates, removes, accesses;
    for (const auto& [id, t] : grammar.templates) {
      if (t.method == HttpMethod::Post && t.produces && t.produces->resource_type == type)
        creates.push_back(id);
      const auto consumed = t.consumed_types();
      if (std::find(consumed.begin(), consumed.end(), type) == consumed.end()) continue;
      if (t.method == HttpMethod::Delete) removes.push_back(id);
      if (t.method == HttpMethod::Get) accesses.push_back(id);
    }
    for (const auto& c : creates)
      for (const auto& r : removes)
        for (const auto& a : accesses) out.push_back({type, c, r, a});
  }
  return out;
}

const UafTriple& UafRotation::next() {
  if (triples_.empty()) throw std::logic_error("no use-after-free triples in grammar");
  const auto& t = triples_[cursor_];
  cursor_ = (cursor_ + 1) % triples_.size();
  return t;
}

namespace {

// Producer templates (ids) to send before `target` so its consumers resolve.
void setup_chain(const CompiledGrammar& grammar, const RequestTemplate& target,
                 std::set<std::string>& available, std::vector<std::string>& chain, int depth) {
  if (depth > 8) throw SetupFailed("producer chain too deep for " + target.id);
  for (const auto& type : target.consumed_types()) {
    if (available.count(type)) continue;
    const RequestTemplate* producer = nullptr;
    for (const auto& [id, t] : grammar.templates) {
      if (t.produces && t.produces->resource_type == type &&
          (producer == nullptr || (t.method == HttpMethod::Post && producer->method != HttpMethod::Post)))
        producer = &t;
    }
    if (producer == nullptr) throw SetupFailed("no producer of '" + type + "'");
    setup_chain(grammar, *producer, available, chain, depth + 1);
    chain.push_back(producer->id);
    available.insert(type);
  }
}

}  // namespace

CheckResult use_after_free_check(const CompiledGrammar& grammar, const UafTriple& triple,
                                 const SendFn& send,
                                 const std::map<std::string, std::string>& headers,
                                 CheckResult* partial) {
  CheckResult out;
  out.ran = true;
  ObjectIdPool pool;

  auto fail = [&](const std::string& why) {
    if (partial) *partial = out;
    throw SetupFailed(why);
  };

  auto issue = [&](const RequestTemplate& tmpl) -> const ResponseRecord& {
    ReadyRequest req;
    try {
      req = render_defaults(tmpl, pool);
    } catch (const MissingProducerId& e) {
      fail(e.what());
    }
    for (const auto& [name, value] : headers) req.headers[name] = value;
    auto response = send(req);
    const auto step = out.sent.size();
    if (response.cls == ResponseClass::Pass2xx)
      for (auto& [type, id] : extract_producer_ids(tmpl, response.body))
        pool.add(type, {std::move(id), tmpl.id, step});
    out.sent.push_back(std::move(req));
    out.responses.push_back(std::move(response));
    return out.responses.back();
  };

  const auto& create = grammar.at(triple.create);
  std::set<std::string> available;
  std::vector<std::string> chain;
  setup_chain(grammar, create, available, chain, 0);
  for (const auto& id : chain)
    if (issue(grammar.at(id)).cls != ResponseClass::Pass2xx) fail("setup request " + id + " rejected");

  if (issue(create).cls != ResponseClass::Pass2xx) fail("create rejected: " + create.id);
  if (!pool.has(triple.resource_type)) fail("create returned no id: " + create.id);
  const auto deleted = pool.ids(triple.resource_type).back().value;

  if (issue(grammar.at(triple.remove)).cls != ResponseClass::Pass2xx)
    fail("delete rejected: " + triple.remove);

  const auto& access = issue(grammar.at(triple.access));
  if (access.cls != ResponseClass::Reject4xx && access.cls != ResponseClass::Transport) {
    Violation v;
    v.kind = ViolationKind::UseAfterFree;
    v.replay = out.sent;
    v.responses = out.responses;
    v.offending = v.replay.size() - 1;
    v.deleted_id = deleted;
    out.violation = std::move(v);
  }
  return out;
}

}  // namespace restfuzz
