#pragma once

#include <cstddef>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "restfuzz/grammar.hpp"
#include "restfuzz/http.hpp"

namespace restfuzz {

using Rng = std::mt19937_64;

struct SequenceTemplate {
  std::vector<std::string> template_ids;

  std::size_t length() const { return template_ids.size(); }
  bool empty() const { return template_ids.empty(); }
  auto operator<=>(const SequenceTemplate&) const = default;
};

class EmptySeedSet : public std::invalid_argument {
 public:
  EmptySeedSet() : std::invalid_argument("seed set is empty") {}
};

struct WeightedSeed {
  SequenceTemplate seed;
  double weight = 0.0;
  double probability = 0.0;
};

// Length-orientated weighting: log10(l + 1), normalized over the set.
double length_weight(std::size_t length);
std::vector<WeightedSeed> selection_weights(const std::vector<SequenceTemplate>& seeds);
const SequenceTemplate& select_seed(const std::vector<SequenceTemplate>& seeds, Rng& rng);

// Resource types produced by the templates of `seq` (any position).
std::set<std::string> produced_types(const SequenceTemplate& seq, const CompiledGrammar& grammar);
bool is_satisfiable(const SequenceTemplate& seq, const CompiledGrammar& grammar);

// seed ++ [t] for every template t satisfiable after the seed, ordered by
// template id. Empty when the seed is already at `max_length`.
std::vector<SequenceTemplate> extend(const SequenceTemplate& seed, const CompiledGrammar& grammar,
                                     std::size_t max_length);

enum class ExtensionResult { Extended, Failed };
ExtensionResult classify_extension(const SequenceTemplate& candidate,
                                   const std::vector<ResponseClass>& responses);

// Source of candidate sequences for the fuzz loop.
class CandidateScheduler {
 public:
  virtual ~CandidateScheduler() = default;
  // Next batch of candidates. May be empty; callers retry.
  virtual std::vector<SequenceTemplate> next_batch(Rng& rng) = 0;
  virtual void report(const SequenceTemplate& candidate, ExtensionResult result) = 0;
};

// Breadth-first frontier extension: every successfully extended template of
// the last round is extended by every satisfiable request; the search restarts
// from the empty template when no candidate of a round was extended.
class FrontierScheduler final : public CandidateScheduler {
 public:
  FrontierScheduler(const CompiledGrammar& grammar, std::size_t max_length);

  std::vector<SequenceTemplate> next_batch(Rng& rng) override;
  void report(const SequenceTemplate& candidate, ExtensionResult result) override;

  std::size_t restarts() const { return restarts_; }

 private:
  const CompiledGrammar& grammar_;
  std::size_t max_length_;
  std::vector<SequenceTemplate> frontier_;
  std::set<SequenceTemplate> next_frontier_;
  std::size_t restarts_ = 0;
};

// Length-weighted selection over the admitted seeds; one selected seed is
// extended per batch. The empty template bootstraps an empty seed store.
class SeedScheduler final : public CandidateScheduler {
 public:
  SeedScheduler(const CompiledGrammar& grammar, std::size_t max_length);

  void add_seed(const std::vector<std::string>& template_ids);
  std::vector<SequenceTemplate> next_batch(Rng& rng) override;
  void report(const SequenceTemplate&, ExtensionResult) override {}

  std::size_t seed_count() const { return seeds_.size(); }

 private:
  const CompiledGrammar& grammar_;
  std::size_t max_length_;
  std::vector<SequenceTemplate> seeds_;  // extendable (length < max_length)
  std::set<SequenceTemplate> known_;
};

}  // namespace restfuzz
