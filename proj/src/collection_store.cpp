#include "restfuzz/collection_store.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace restfuzz {

using nlohmann::json;

void CollectionStore::record_request_outcome(const RequestTemplate& tmpl,
                                             const std::map<std::string, std::string>& rendered,
                                             ResponseClass response_class, std::uint64_t tick) {
  if (!passes_checking(response_class)) return;

  PairList list{tmpl.id, {}};
  for (const auto& p : tmpl.params) {
    if (p.consumes) continue;  // object ids are ephemeral
    const auto it = rendered.find(p.name);
    if (it == rendered.end() || it->second == p.default_value) continue;
    ParamValuePair pair{p.name, it->second};
    list.pairs.push_back(pair);

    auto key = std::make_tuple(tmpl.id, pair, response_class);
    if (const auto found = pair_index_.find(key); found != pair_index_.end()) {
      ++pairs_[found->second].hits;
      continue;
    }
    pair_index_.emplace(std::move(key), pairs_.size());
    pairs_.push_back({tmpl.id, pair, response_class, tick, 1});
    if (journal_) {
      *journal_ << json{{"kind", "pair"},
                        {"template", tmpl.id},
                        {"param", pair.param_name},
                        {"value", pair.value},
                        {"class", std::string(to_string(response_class))},
                        {"tick", tick}}
                       .dump()
                << '\n';
    }
  }

  if (response_class == ResponseClass::Pass2xx) {
    if (distinct_lists_[tmpl.id].insert(list.pairs).second) ordered_lists_[tmpl.id].push_back(list.pairs);
    pass_lists_.push_back({std::move(list), tick});
  }
}

bool CollectionStore::admit_sequence(const std::vector<ExecutedStep>& steps,
                                     std::size_t expected_length, std::uint64_t iteration) {
  if (steps.empty() || steps.size() != expected_length) return false;
  for (const auto& s : steps) {
    if (!passes_checking(s.response_class)) return false;
    for (auto producer : s.used_producers)
      if (producer >= steps.size() || steps[producer].response_class != ResponseClass::Pass2xx)
        return false;
  }
  std::vector<std::string> ids;
  ids.reserve(steps.size());
  for (const auto& s : steps) ids.push_back(s.template_id);
  if (seed_index_.insert(ids).second) {
    if (journal_) *journal_ << json{{"kind", "seed"}, {"templates", ids}, {"iteration", iteration}}.dump() << '\n';
    seeds_.push_back({std::move(ids), steps.size(), iteration});
  }
  return true;
}

std::vector<PairList> CollectionStore::training_corpus(std::uint64_t since) const {
  std::vector<PairList> out;
  for (const auto& entry : pass_lists_)
    if (entry.tick > since) out.push_back(entry.list);
  return out;
}

std::vector<ParamValuePair> CollectionStore::undefined_pairs_for(const RequestTemplate& tmpl) const {
  std::vector<ParamValuePair> out;
  std::set<ParamValuePair> seen;
  for (const auto& obs : pairs_) {
    if (tmpl.defines(obs.pair.param_name)) continue;
    if (seen.insert(obs.pair).second) out.push_back(obs.pair);
  }
  return out;
}

std::vector<ParamValuePair> CollectionStore::pass_pairs_for(const std::string& template_id) const {
  std::vector<ParamValuePair> out;
  std::set<ParamValuePair> seen;
  for (const auto& obs : pairs_) {
    if (obs.template_id != template_id || obs.response_class != ResponseClass::Pass2xx) continue;
    if (seen.insert(obs.pair).second) out.push_back(obs.pair);
  }
  return out;
}

std::vector<std::vector<ParamValuePair>> CollectionStore::pass_lists_for(
    const std::string& template_id) const {
  const auto it = ordered_lists_.find(template_id);
  return it == ordered_lists_.end() ? std::vector<std::vector<ParamValuePair>>{} : it->second;
}

}  // namespace restfuzz
