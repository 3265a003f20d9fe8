#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "restfuzz/grammar.hpp"
#include "restfuzz/http.hpp"

namespace restfuzz {

// A mutated parameter and the exact wire value it carried.
struct ParamValuePair {
  std::string param_name;
  std::string value;

  auto operator<=>(const ParamValuePair&) const = default;
};

struct PairObservation {
  std::string template_id;
  ParamValuePair pair;
  ResponseClass response_class = ResponseClass::Pass2xx;
  std::uint64_t observed_at = 0;  // first sighting
  std::uint64_t hits = 0;
};

struct SeedSequenceTemplate {
  std::vector<std::string> template_ids;
  std::size_t length = 0;
  std::uint64_t admission_iteration = 0;
};

// One executed request as seen by the collection step.
struct ExecutedStep {
  std::string template_id;
  ResponseClass response_class = ResponseClass::Transport;
  // Steps whose produced ids this request consumed.
  std::vector<std::size_t> used_producers;
};

// Training-corpus entry: the non-default pairs of one 2xx request, in
// template parameter order.
struct PairList {
  std::string template_id;
  std::vector<ParamValuePair> pairs;

  bool operator==(const PairList&) const = default;
};

// Historical data gathered while fuzzing: seed sequence templates and the
// param-value pairs of requests that passed the target's checking.
// Single writer; readers needing isolation take copies via training_corpus().
class CollectionStore {
 public:
  void record_request_outcome(const RequestTemplate& tmpl,
                              const std::map<std::string, std::string>& rendered,
                              ResponseClass response_class, std::uint64_t tick);

  // Returns true when the executed sequence qualifies as a seed (whether or
  // not it was already stored).
  bool admit_sequence(const std::vector<ExecutedStep>& steps, std::size_t expected_length,
                      std::uint64_t iteration);

  // Non-default pair lists of every 2xx request observed strictly after `since`.
  std::vector<PairList> training_corpus(std::uint64_t since) const;

  // Stored pairs (2xx and 5xx) whose parameter the template does not define.
  std::vector<ParamValuePair> undefined_pairs_for(const RequestTemplate& tmpl) const;

  // 2xx pairs recorded for the template, distinct, first-seen order.
  std::vector<ParamValuePair> pass_pairs_for(const std::string& template_id) const;
  // Distinct 2xx pair lists recorded for the template, first-seen order.
  std::vector<std::vector<ParamValuePair>> pass_lists_for(const std::string& template_id) const;

  const std::vector<SeedSequenceTemplate>& seeds() const { return seeds_; }
  const std::vector<PairObservation>& pairs() const { return pairs_; }

  // Optional append-only JSONL journal of observations and seeds.
  void set_journal(std::ostream* out) { journal_ = out; }

 private:
  struct TimedList {
    PairList list;
    std::uint64_t tick = 0;
  };

  std::vector<PairObservation> pairs_;
  std::map<std::tuple<std::string, ParamValuePair, ResponseClass>, std::size_t> pair_index_;
  std::vector<TimedList> pass_lists_;
  std::map<std::string, std::set<std::vector<ParamValuePair>>> distinct_lists_;
  std::map<std::string, std::vector<std::vector<ParamValuePair>>> ordered_lists_;
  std::vector<SeedSequenceTemplate> seeds_;
  std::set<std::vector<std::string>> seed_index_;
  std::ostream* journal_ = nullptr;
};

}  // namespace restfuzz
