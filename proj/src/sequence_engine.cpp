#include "restfuzz/sequence_engine.hpp"

#include <cmath>
#include <numeric>

namespace restfuzz {

double length_weight(std::size_t length) { return std::log10(static_cast<double>(length) + 1.0); }

std::vector<WeightedSeed> selection_weights(const std::vector<SequenceTemplate>& seeds) {
  if (seeds.empty()) throw EmptySeedSet();
  std::vector<WeightedSeed> out;
  out.reserve(seeds.size());
  double total = 0.0;
  for (const auto& s : seeds) {
    const double w = length_weight(s.length());
    total += w;
    out.push_back({s, w, 0.0});
  }
  for (auto& ws : out) ws.probability = total > 0.0 ? ws.weight / total : 1.0 / out.size();
  return out;
}

const SequenceTemplate& select_seed(const std::vector<SequenceTemplate>& seeds, Rng& rng) {
  if (seeds.empty()) throw EmptySeedSet();
  if (seeds.size() == 1) return seeds.front();
  double total = 0.0;
  for (const auto& s : seeds) total += length_weight(s.length());
  if (total <= 0.0) return seeds.front();
  std::uniform_real_distribution<double> uniform(0.0, total);
  double draw = uniform(rng);
  for (const auto& s : seeds) {
    draw -= length_weight(s.length());
    if (draw < 0.0) return s;
  }
  // Rounding: fall back to the last positive-weight seed.
  for (auto it = seeds.rbegin(); it != seeds.rend(); ++it)
    if (it->length() > 0) return *it;
  return seeds.back();
}

std::set<std::string> produced_types(const SequenceTemplate& seq, const CompiledGrammar& grammar) {
  std::set<std::string> out;
  for (const auto& id : seq.template_ids) {
    const auto& t = grammar.at(id);
    if (t.produces) out.insert(t.produces->resource_type);
  }
  return out;
}

bool is_satisfiable(const SequenceTemplate& seq, const CompiledGrammar& grammar) {
  std::set<std::string> available;
  for (const auto& id : seq.template_ids) {
    if (!grammar.contains(id)) return false;
    const auto& t = grammar.at(id);
    for (const auto& type : t.consumed_types())
      if (!available.count(type)) return false;
    if (t.produces) available.insert(t.produces->resource_type);
  }
  return true;
}

std::vector<SequenceTemplate> extend(const SequenceTemplate& seed, const CompiledGrammar& grammar,
                                     std::size_t max_length) {
  std::vector<SequenceTemplate> out;
  if (seed.length() >= max_length) return out;
  for (const auto& id : satisfiable_templates(grammar, produced_types(seed, grammar))) {
    SequenceTemplate candidate = seed;
    candidate.template_ids.push_back(id);
    out.push_back(std::move(candidate));
  }
  return out;
}

ExtensionResult classify_extension(const SequenceTemplate& candidate,
                                   const std::vector<ResponseClass>& responses) {
  if (responses.size() != candidate.length() || responses.empty()) return ExtensionResult::Failed;
  return responses.back() == ResponseClass::Pass2xx ? ExtensionResult::Extended
                                                    : ExtensionResult::Failed;
}

FrontierScheduler::FrontierScheduler(const CompiledGrammar& grammar, std::size_t max_length)
    : grammar_(grammar), max_length_(max_length) {}

std::vector<SequenceTemplate> FrontierScheduler::next_batch(Rng&) {
  frontier_.assign(next_frontier_.begin(), next_frontier_.end());
  next_frontier_.clear();
  if (frontier_.empty()) {
    frontier_.push_back(SequenceTemplate{});
    ++restarts_;
  }
  std::vector<SequenceTemplate> batch;
  for (const auto& f : frontier_) {
    auto cands = extend(f, grammar_, max_length_);
    batch.insert(batch.end(), std::make_move_iterator(cands.begin()),
                 std::make_move_iterator(cands.end()));
  }
  return batch;
}

void FrontierScheduler::report(const SequenceTemplate& candidate, ExtensionResult result) {
  if (result == ExtensionResult::Extended) next_frontier_.insert(candidate);
}

SeedScheduler::SeedScheduler(const CompiledGrammar& grammar, std::size_t max_length)
    : grammar_(grammar), max_length_(max_length) {}

void SeedScheduler::add_seed(const std::vector<std::string>& template_ids) {
  SequenceTemplate seq{template_ids};
  if (seq.empty() || seq.length() >= max_length_) return;
  if (known_.insert(seq).second) seeds_.push_back(std::move(seq));
}

std::vector<SequenceTemplate> SeedScheduler::next_batch(Rng& rng) {
  if (seeds_.empty()) return extend(SequenceTemplate{}, grammar_, max_length_);
  return extend(select_seed(seeds_, rng), grammar_, max_length_);
}

}  // namespace restfuzz
