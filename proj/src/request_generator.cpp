#include "restfuzz/request_generator.hpp"

#include <algorithm>
#include <set>

namespace restfuzz {

namespace {

void place(ReadyRequest& req, ParamLocation loc, const std::string& name, const std::string& value) {
  switch (loc) {
    case ParamLocation::Path: req.path_params[name] = value; break;
    case ParamLocation::Query: req.query[name] = value; break;
    case ParamLocation::Body: req.body[name] = value; break;
  }
}

ReadyRequest skeleton(const RequestTemplate& tmpl) {
  ReadyRequest req;
  req.template_id = tmpl.id;
  req.method = tmpl.method;
  req.path_template = tmpl.path;
  if (tmpl.produces) req.produces_pointer = tmpl.produces->pointer;
  return req;
}

void bind_consumer(ReadyRequest& req, const ParamSpec& p, const ObjectIdPool& pool) {
  const auto& entry = resolve_consumer(p, pool);
  place(req, p.location, p.name, entry.value);
  req.bindings[p.name] = {entry.step, p.location};
}

// Values for non-consumer params come from `pick`.
template <typename Pick>
ReadyRequest render(const RequestTemplate& tmpl, const ObjectIdPool& pool, Pick&& pick) {
  auto req = skeleton(tmpl);
  for (const auto& p : tmpl.params) {
    if (p.consumes)
      bind_consumer(req, p, pool);
    else
      place(req, p.location, p.name, pick(p));
  }
  return req;
}

}  // namespace

void validate_list(const RequestTemplate& tmpl, const ParamValueList& list) {
  if (list.template_id != tmpl.id)
    throw ForeignPair("list for '" + list.template_id + "' applied to '" + tmpl.id + "'");
  std::set<std::string> seen;
  for (const auto& pair : list.pairs) {
    const auto* p = tmpl.find_param(pair.param_name);
    if (p == nullptr || p->consumes)
      throw ForeignPair("'" + pair.param_name + "' is not a mutable parameter of " + tmpl.id);
    if (!seen.insert(pair.param_name).second)
      throw ForeignPair("'" + pair.param_name + "' appears twice in list for " + tmpl.id);
  }
}

bool ObjectIdPool::has(const std::string& type) const {
  const auto it = ids_.find(type);
  return it != ids_.end() && !it->second.empty();
}

const std::vector<ObjectIdPool::Entry>& ObjectIdPool::ids(const std::string& type) const {
  static const std::vector<Entry> none;
  const auto it = ids_.find(type);
  return it == ids_.end() ? none : it->second;
}

const ObjectIdPool::Entry& resolve_consumer(const ParamSpec& param, const ObjectIdPool& pool) {
  if (!param.consumes) throw std::invalid_argument("'" + param.name + "' is not a consumer parameter");
  const auto& ids = pool.ids(*param.consumes);
  if (ids.empty()) throw MissingProducerId(*param.consumes);
  return ids.back();
}

ReadyRequest render_traditional(const RequestTemplate& tmpl, const ObjectIdPool& pool, Rng& rng) {
  return render(tmpl, pool, [&](const ParamSpec& p) {
    std::uniform_int_distribution<std::size_t> pick(0, p.dictionary.size() - 1);
    return p.dictionary[pick(rng)];
  });
}

ReadyRequest render_with_list(const RequestTemplate& tmpl, const ParamValueList& list,
                              const ObjectIdPool& pool) {
  validate_list(tmpl, list);
  return render(tmpl, pool, [&](const ParamSpec& p) {
    for (const auto& pair : list.pairs)
      if (pair.param_name == p.name) return pair.value;
    return p.default_value;
  });
}

ReadyRequest render_defaults(const RequestTemplate& tmpl, const ObjectIdPool& pool) {
  return render_with_list(tmpl, ParamValueList{tmpl.id, {}}, pool);
}

std::optional<ParamValueList> choose_list(const std::vector<ParamValueList>& lists, Rng& rng) {
  if (lists.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, lists.size() - 1);
  return lists[pick(rng)];
}

std::vector<std::pair<std::string, std::string>> extract_producer_ids(const RequestTemplate& tmpl,
                                                                       const std::string& body) {
  if (!tmpl.produces) return {};
  auto id = read_pointer(body, tmpl.produces->pointer);
  if (!id) return {};
  return {{tmpl.produces->resource_type, std::move(*id)}};
}

std::map<std::string, std::string> rendered_values(const ReadyRequest& request) {
  std::map<std::string, std::string> out = request.path_params;
  out.insert(request.query.begin(), request.query.end());
  out.insert(request.body.begin(), request.body.end());
  return out;
}

std::shared_ptr<const ListSnapshot> SnapshotStore::current() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return snapshot_;
}

void SnapshotStore::publish(const ListSnapshot& lists) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto next = std::make_shared<ListSnapshot>(*snapshot_);
  for (const auto& [tid, incoming] : lists) {
    auto& slot = (*next)[tid];
    for (const auto& list : incoming) {
      if (std::find(slot.begin(), slot.end(), list) != slot.end()) continue;
      slot.push_back(list);
    }
    if (slot.size() > cap_) slot.erase(slot.begin(), slot.begin() + (slot.size() - cap_));
  }
  snapshot_ = std::move(next);
  ++publications_;
}

std::size_t SnapshotStore::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::size_t n = 0;
  for (const auto& [tid, lists] : *snapshot_) n += lists.size();
  return n;
}

std::size_t SnapshotStore::publications() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return publications_;
}

std::vector<ResponseClass> ExecutedSequence::classes() const {
  std::vector<ResponseClass> out;
  out.reserve(responses.size());
  for (const auto& r : responses) out.push_back(r.cls);
  return out;
}

namespace {

ReadyRequest render_prefix(const RequestTemplate& tmpl, const RenderContext& ctx,
                           const ObjectIdPool& pool, Rng& rng) {
  switch (ctx.mode) {
    case RenderMode::Traditional: return render_traditional(tmpl, pool, rng);
    case RenderMode::Rec1: {
      const auto pairs = ctx.store ? ctx.store->pass_pairs_for(tmpl.id) : std::vector<ParamValuePair>{};
      if (pairs.empty()) return render_defaults(tmpl, pool);
      std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
      return render_with_list(tmpl, {tmpl.id, {pairs[pick(rng)]}}, pool);
    }
    case RenderMode::RecList: {
      const auto lists = ctx.store ? ctx.store->pass_lists_for(tmpl.id)
                                   : std::vector<std::vector<ParamValuePair>>{};
      if (lists.empty()) return render_defaults(tmpl, pool);
      std::uniform_int_distribution<std::size_t> pick(0, lists.size() - 1);
      return render_with_list(tmpl, {tmpl.id, lists[pick(rng)]}, pool);
    }
    case RenderMode::Model: {
      if (ctx.lists) {
        if (const auto it = ctx.lists->find(tmpl.id); it != ctx.lists->end())
          if (auto list = choose_list(it->second, rng)) return render_with_list(tmpl, *list, pool);
      }
      // Cold start: no generated lists for this template yet.
      return render_traditional(tmpl, pool, rng);
    }
  }
  return render_traditional(tmpl, pool, rng);
}

}  // namespace

ExecutedSequence render_sequence(const SequenceTemplate& candidate, const RenderContext& ctx,
                                 Rng& rng, const SendFn& send) {
  ExecutedSequence out;
  out.candidate = candidate;
  ObjectIdPool pool;
  const auto n = candidate.length();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& tmpl = ctx.grammar.at(candidate.template_ids[k]);
    ReadyRequest req;
    try {
      req = k + 1 == n ? render_traditional(tmpl, pool, rng) : render_prefix(tmpl, ctx, pool, rng);
    } catch (const MissingProducerId&) {
      out.aborted = true;
      break;
    }
    for (const auto& [name, value] : ctx.headers) req.headers[name] = value;

    auto response = send(req);
    ExecutedStep step{tmpl.id, response.cls, {}};
    for (const auto& [param, binding] : req.bindings) step.used_producers.push_back(binding.step);
    if (response.cls == ResponseClass::Pass2xx) {
      for (auto& [type, id] : extract_producer_ids(tmpl, response.body))
        pool.add(type, {std::move(id), tmpl.id, k});
    }
    out.requests.push_back(std::move(req));
    out.responses.push_back(std::move(response));
    out.steps.push_back(std::move(step));
  }
  return out;
}

ReplayOutcome replay_requests(const std::vector<ReadyRequest>& requests, const SendFn& send) {
  ReplayOutcome out;
  std::map<std::size_t, std::string> produced;
  for (std::size_t k = 0; k < requests.size(); ++k) {
    auto req = requests[k];
    for (const auto& [param, binding] : req.bindings) {
      const auto it = produced.find(binding.step);
      if (it != produced.end()) place(req, binding.location, param, it->second);
    }
    auto response = send(req);
    if (response.cls == ResponseClass::Pass2xx && req.produces_pointer) {
      if (auto id = read_pointer(response.body, *req.produces_pointer)) produced[k] = std::move(*id);
    }
    out.sent.push_back(std::move(req));
    out.responses.push_back(std::move(response));
  }
  return out;
}

}  // namespace restfuzz
