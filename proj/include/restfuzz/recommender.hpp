#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "restfuzz/collection_store.hpp"
#include "restfuzz/grammar.hpp"
#include "restfuzz/request_generator.hpp"
#include "restfuzz/sequence_engine.hpp"

namespace restfuzz {

class EmptyCorpus : public std::invalid_argument {
 public:
  EmptyCorpus() : std::invalid_argument("training corpus is empty") {}
};

class UnknownTemplate : public std::invalid_argument {
 public:
  explicit UnknownTemplate(const std::string& id)
      : std::invalid_argument("template '" + id + "' has no token in the vocabulary") {}
};

// Token alphabet of one training iteration. Id 0 is the terminator, then
// request names, then template-scoped pairs, each group in lexicographic order.
class Vocabulary {
 public:
  static constexpr int kTerminator = 0;

  enum class Kind { Terminator, Name, Pair };
  struct Token {
    Kind kind = Kind::Terminator;
    std::string template_id;
    ParamValuePair pair;
  };

  static Vocabulary build(const std::vector<PairList>& corpus);

  int size() const { return static_cast<int>(tokens_.size()); }
  const Token& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> name_id(const std::string& template_id) const;
  std::optional<int> pair_id(const std::string& template_id, const ParamValuePair& pair) const;
  std::vector<std::string> template_ids() const;

 private:
  std::vector<Token> tokens_;
  std::map<std::string, int> names_;
  std::map<std::pair<std::string, ParamValuePair>, int> pairs_;
};

Vocabulary build_vocab(const std::vector<PairList>& corpus);

// [name, pair..., terminator]
using TrainingExample = std::vector<int>;
std::vector<TrainingExample> encode_corpus(const Vocabulary& vocab, const std::vector<PairList>& corpus);

// Disjoint shuffle split; the training side gets round(ratio * n) examples.
std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>> split_corpus(
    std::vector<TrainingExample> examples, Rng& rng, double ratio);

// Embedding -> GRU -> bilinear attention over the GRU states (final state as
// query) -> linear layer over [context; final state] -> softmax.
struct ModelParams {
  int vocab = 0;
  int embed = 0;
  int hidden = 0;
  std::uint64_t version = 0;

  Eigen::MatrixXd embedding;                    // vocab x embed
  Eigen::MatrixXd w_update, w_reset, w_cand;    // hidden x embed
  Eigen::MatrixXd u_update, u_reset, u_cand;    // hidden x hidden
  Eigen::MatrixXd b_update, b_reset, b_cand;    // hidden x 1
  Eigen::MatrixXd attention;                    // hidden x hidden
  Eigen::MatrixXd w_out;                        // vocab x 2*hidden
  Eigen::MatrixXd b_out;                        // vocab x 1

  static ModelParams random(int vocab, int embed, int hidden, Rng& rng);
  static ModelParams zeros_like(const ModelParams& other);

  // Named views over every parameter block, in a fixed order.
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> blocks();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> blocks() const;
  bool all_finite() const;
};

// Next-token distribution after `prefix`.
Eigen::VectorXd forward(const ModelParams& params, const std::vector<int>& prefix);

// Summed next-token cross-entropy over every position of `example`, with the
// gradient accumulated into `grads`. Returns the loss and the number of
// predicted positions via `positions`.
double loss_and_gradients(const ModelParams& params, const TrainingExample& example,
                          ModelParams* grads, int* positions = nullptr);
double sequence_loss(const ModelParams& params, const TrainingExample& example);

struct TrainConfig {
  int embed = 18;
  int hidden = 36;
  int epochs = 27;
  int batch_size = 32;
  double learning_rate = 0.01;
  enum class Optimizer { Sgd, Adam } optimizer = Optimizer::Adam;
  double train_ratio = 0.8;
  std::size_t max_examples = 4000;  // random subsample above this
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;               // mean per predicted token
  std::optional<double> val_accuracy;    // none when validation is empty
  double wall_seconds = 0.0;
};

struct TrainResult {
  Vocabulary vocab;
  ModelParams params;
  std::optional<double> val_accuracy;
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  std::size_t longest_list = 0;  // pairs in the longest training list
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Trains from a fresh random initialization. Throws EmptyCorpus.
TrainResult train(const std::vector<PairList>& corpus, const TrainConfig& config, Rng& rng,
                  const EpochCallback& on_epoch = {});

// Top-1 accuracy over every predicted position; nullopt for an empty set.
std::optional<double> top1_accuracy(const ModelParams& params,
                                    const std::vector<TrainingExample>& examples);

// K sampled generations (temperature 1) for one template. Pair tokens of other
// templates and repeated parameters are masked out. Duplicates are dropped.
std::vector<ParamValueList> generate_lists(const ModelParams& params, const Vocabulary& vocab,
                                           const std::string& template_id, int k, Rng& rng,
                                           std::size_t max_len);

// Flat little-endian float64 tensors plus a JSON manifest next to it.
void dump_weights(const ModelParams& params, const std::string& directory, std::uint64_t iteration);

struct RecommenderConfig {
  TrainConfig train;
  int lists_per_template = 32;
};

// One training iteration: train on `corpus`, generate lists for every template
// present in it, validate them against the grammar.
struct IterationResult {
  TrainResult training;
  ListSnapshot lists;
};
IterationResult run_training_iteration(const std::vector<PairList>& corpus,
                                       const CompiledGrammar& grammar,
                                       const RecommenderConfig& config, Rng& rng,
                                       const EpochCallback& on_epoch = {});

// Background trainer. Corpus snapshots are handed over by value; results are
// published to the SnapshotStore. A submission while busy is dropped.
class RecommenderWorker {
 public:
  using Listener = std::function<void(std::uint64_t iteration, const IterationResult&)>;

  RecommenderWorker(const CompiledGrammar& grammar, RecommenderConfig config, SnapshotStore& out,
                    std::uint64_t seed, Listener listener = {}, EpochCallback on_epoch = {});
  ~RecommenderWorker();

  RecommenderWorker(const RecommenderWorker&) = delete;
  RecommenderWorker& operator=(const RecommenderWorker&) = delete;

  bool submit(std::vector<PairList> corpus);
  void wait_idle();
  std::uint64_t completed() const;

 private:
  void loop();

  const CompiledGrammar& grammar_;
  RecommenderConfig config_;
  SnapshotStore& out_;
  Rng rng_;
  Listener listener_;
  EpochCallback on_epoch_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<std::vector<PairList>> pending_;
  bool busy_ = false;
  bool stop_ = false;
  std::uint64_t completed_ = 0;
  std::thread thread_;
};

}  // namespace restfuzz
