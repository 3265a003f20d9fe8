#include "restfuzz/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace restfuzz {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Vocabulary Vocabulary::build(const std::vector<PairList>& corpus) {
  std::set<std::string> names;
  std::set<std::pair<std::string, ParamValuePair>> pairs;
  for (const auto& entry : corpus) {
    names.insert(entry.template_id);
    for (const auto& pair : entry.pairs) pairs.emplace(entry.template_id, pair);
  }
  Vocabulary v;
  v.tokens_.push_back({Kind::Terminator, {}, {}});
  for (const auto& name : names) {
    v.names_[name] = v.size();
    v.tokens_.push_back({Kind::Name, name, {}});
  }
  for (const auto& [tid, pair] : pairs) {
    v.pairs_[{tid, pair}] = v.size();
    v.tokens_.push_back({Kind::Pair, tid, pair});
  }
  return v;
}

std::optional<int> Vocabulary::name_id(const std::string& template_id) const {
  const auto it = names_.find(template_id);
  return it == names_.end() ? std::nullopt : std::optional<int>(it->second);
}

std::optional<int> Vocabulary::pair_id(const std::string& template_id,
                                       const ParamValuePair& pair) const {
  const auto it = pairs_.find({template_id, pair});
  return it == pairs_.end() ? std::nullopt : std::optional<int>(it->second);
}

std::vector<std::string> Vocabulary::template_ids() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : names_) out.push_back(name);
  return out;
}

Vocabulary build_vocab(const std::vector<PairList>& corpus) { return Vocabulary::build(corpus); }

std::vector<TrainingExample> encode_corpus(const Vocabulary& vocab,
                                           const std::vector<PairList>& corpus) {
  std::vector<TrainingExample> out;
  out.reserve(corpus.size());
  for (const auto& entry : corpus) {
    const auto name = vocab.name_id(entry.template_id);
    if (!name) continue;
    TrainingExample ex{*name};
    for (const auto& pair : entry.pairs)
      if (auto id = vocab.pair_id(entry.template_id, pair)) ex.push_back(*id);
    ex.push_back(Vocabulary::kTerminator);
    out.push_back(std::move(ex));
  }
  return out;
}

std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>> split_corpus(
    std::vector<TrainingExample> examples, Rng& rng, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must be in (0,1)");
  std::shuffle(examples.begin(), examples.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(examples.size())));
  if (!examples.empty()) n_train = std::clamp<std::size_t>(n_train, 1, examples.size());
  std::vector<TrainingExample> validation(examples.begin() + static_cast<std::ptrdiff_t>(n_train),
                                          examples.end());
  examples.resize(n_train);
  return {std::move(examples), std::move(validation)};
}

std::optional<double> top1_accuracy(const ModelParams& params,
                                    const std::vector<TrainingExample>& examples) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    for (std::size_t t = 1; t < ex.size(); ++t) {
      const std::vector<int> prefix(ex.begin(), ex.begin() + static_cast<std::ptrdiff_t>(t));
      Eigen::Index best = 0;
      forward(params, prefix).maxCoeff(&best);
      correct += static_cast<int>(best) == ex[t];
      ++total;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ModelParams& shape)
      : cfg_(cfg), m_(ModelParams::zeros_like(shape)), v_(ModelParams::zeros_like(shape)) {}

  void step(ModelParams& params, ModelParams& grads) {
    ++t_;
    auto p_blocks = params.blocks();
    auto g_blocks = grads.blocks();
    if (cfg_.optimizer == TrainConfig::Optimizer::Sgd) {
      for (std::size_t i = 0; i < p_blocks.size(); ++i)
        *p_blocks[i].second -= cfg_.learning_rate * *g_blocks[i].second;
      return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    auto m_blocks = m_.blocks();
    auto v_blocks = v_.blocks();
    const double c1 = 1.0 - std::pow(beta1, t_);
    const double c2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < p_blocks.size(); ++i) {
      auto& g = *g_blocks[i].second;
      auto& m = *m_blocks[i].second;
      auto& v = *v_blocks[i].second;
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      p_blocks[i].second->array() -=
          cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
  }

 private:
  TrainConfig cfg_;
  ModelParams m_, v_;
  int t_ = 0;
};

}  // namespace

TrainResult train(const std::vector<PairList>& corpus_in, const TrainConfig& config, Rng& rng,
                  const EpochCallback& on_epoch) {
  if (corpus_in.empty()) throw EmptyCorpus();
  const auto start = std::chrono::steady_clock::now();
  auto seconds_since_start = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  std::vector<PairList> corpus = corpus_in;
  if (config.max_examples > 0 && corpus.size() > config.max_examples) {
    std::shuffle(corpus.begin(), corpus.end(), rng);
    corpus.resize(config.max_examples);
  }

  TrainResult result;
  result.vocab = build_vocab(corpus);
  for (const auto& entry : corpus) result.longest_list = std::max(result.longest_list, entry.pairs.size());
  auto [train_set, val_set] = split_corpus(encode_corpus(result.vocab, corpus), rng, config.train_ratio);

  result.params = ModelParams::random(result.vocab.size(), config.embed, config.hidden, rng);
  Optimizer opt(config, result.params);
  ModelParams grads = ModelParams::zeros_like(result.params);
  const auto batch = static_cast<std::size_t>(std::max(config.batch_size, 1));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train_set.begin(), train_set.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_positions = 0;
    for (std::size_t lo = 0; lo < train_set.size(); lo += batch) {
      const auto hi = std::min(lo + batch, train_set.size());
      for (auto& [name, block] : grads.blocks()) block->setZero();
      int positions = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        int n = 0;
        epoch_loss += loss_and_gradients(result.params, train_set[i], &grads, &n);
        positions += n;
      }
      if (positions == 0) continue;
      epoch_positions += static_cast<std::size_t>(positions);
      for (auto& [name, block] : grads.blocks()) *block /= static_cast<double>(positions);
      opt.step(result.params, grads);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_positions ? epoch_loss / static_cast<double>(epoch_positions) : 0.0;
    stats.val_accuracy = top1_accuracy(result.params, val_set);
    stats.wall_seconds = seconds_since_start();
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.val_accuracy = result.epochs.empty() ? top1_accuracy(result.params, val_set)
                                              : result.epochs.back().val_accuracy;
  result.params.version = 1;
  result.wall_seconds = seconds_since_start();
  return result;
}

std::vector<ParamValueList> generate_lists(const ModelParams& params, const Vocabulary& vocab,
                                           const std::string& template_id, int k, Rng& rng,
                                           std::size_t max_len) {
  const auto name = vocab.name_id(template_id);
  if (!name) throw UnknownTemplate(template_id);

  std::vector<int> own_pairs;
  for (int id = 0; id < vocab.size(); ++id) {
    const auto& tok = vocab.token(id);
    if (tok.kind == Vocabulary::Kind::Pair && tok.template_id == template_id) own_pairs.push_back(id);
  }

  std::vector<ParamValueList> out;
  std::set<std::vector<ParamValuePair>> seen;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int sample = 0; sample < k; ++sample) {
    std::vector<int> prefix{*name};
    ParamValueList list{template_id, {}};
    std::set<std::string> used;
    while (list.pairs.size() < max_len) {
      const VectorXd probs = forward(params, prefix);
      std::vector<std::pair<int, double>> allowed{{Vocabulary::kTerminator, probs(0)}};
      double total = probs(0);
      for (int id : own_pairs) {
        if (used.count(vocab.token(id).pair.param_name)) continue;
        allowed.emplace_back(id, probs(id));
        total += probs(id);
      }
      double draw = uniform(rng) * total;
      int chosen = allowed.back().first;
      for (const auto& [id, p] : allowed) {
        draw -= p;
        if (draw < 0.0) {
          chosen = id;
          break;
        }
      }
      if (chosen == Vocabulary::kTerminator) break;
      const auto& pair = vocab.token(chosen).pair;
      used.insert(pair.param_name);
      list.pairs.push_back(pair);
      prefix.push_back(chosen);
    }
    if (seen.insert(list.pairs).second) out.push_back(std::move(list));
  }
  return out;
}

void dump_weights(const ModelParams& params, const std::string& directory, std::uint64_t iteration) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const auto stem = fs::path(directory) / ("weights_" + std::to_string(iteration));
  std::ofstream bin(stem.string() + ".bin", std::ios::binary);
  nlohmann::json manifest = {{"iteration", iteration},
                             {"version", params.version},
                             {"vocab", params.vocab},
                             {"embed", params.embed},
                             {"hidden", params.hidden},
                             {"dtype", "float64-le"},
                             {"layout", "column-major"},
                             {"tensors", nlohmann::json::array()}};
  std::size_t offset = 0;
  for (const auto& [name, block] : params.blocks()) {
    const auto bytes = static_cast<std::size_t>(block->size()) * sizeof(double);
    bin.write(reinterpret_cast<const char*>(block->data()), static_cast<std::streamsize>(bytes));
    manifest["tensors"].push_back(
        {{"name", name}, {"rows", block->rows()}, {"cols", block->cols()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  std::ofstream(stem.string() + ".json") << manifest.dump(2) << '\n';
}

IterationResult run_training_iteration(const std::vector<PairList>& corpus,
                                       const CompiledGrammar& grammar,
                                       const RecommenderConfig& config, Rng& rng,
                                       const EpochCallback& on_epoch) {
  IterationResult out;
  out.training = train(corpus, config.train, rng, on_epoch);
  const std::size_t max_len = 2 * out.training.longest_list + 2;
  for (const auto& tid : out.training.vocab.template_ids()) {
    if (!grammar.contains(tid)) continue;
    const auto& tmpl = grammar.at(tid);
    auto lists = generate_lists(out.training.params, out.training.vocab, tid,
                                config.lists_per_template, rng, max_len);
    auto& slot = out.lists[tid];
    for (auto& list : lists) {
      try {
        validate_list(tmpl, list);
        slot.push_back(std::move(list));
      } catch (const ForeignPair&) {
      }
    }
  }
  return out;
}

RecommenderWorker::RecommenderWorker(const CompiledGrammar& grammar, RecommenderConfig config,
                                     SnapshotStore& out, std::uint64_t seed, Listener listener,
                                     EpochCallback on_epoch)
    : grammar_(grammar),
      config_(std::move(config)),
      out_(out),
      rng_(seed),
      listener_(std::move(listener)),
      on_epoch_(std::move(on_epoch)),
      thread_([this] { loop(); }) {}

RecommenderWorker::~RecommenderWorker() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

bool RecommenderWorker::submit(std::vector<PairList> corpus) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (busy_ || pending_) return false;
  pending_ = std::move(corpus);
  cv_.notify_all();
  return true;
}

void RecommenderWorker::wait_idle() {
  std::unique_lock<std::mutex> lock(mutex_);
  cv_.wait(lock, [&] { return !busy_ && !pending_; });
}

std::uint64_t RecommenderWorker::completed() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return completed_;
}

void RecommenderWorker::loop() {
  for (;;) {
    std::vector<PairList> corpus;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      cv_.wait(lock, [&] { return stop_ || pending_.has_value(); });
      if (stop_) return;
      corpus = std::move(*pending_);
      pending_.reset();
      busy_ = true;
    }
    std::uint64_t iteration = 0;
    if (!corpus.empty()) {
      auto result = run_training_iteration(corpus, grammar_, config_, rng_, on_epoch_);
      out_.publish(result.lists);
      std::lock_guard<std::mutex> lock(mutex_);
      iteration = completed_ + 1;
      if (listener_) listener_(iteration, result);
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++completed_;
      busy_ = false;
    }
    cv_.notify_all();
  }
}

}  // namespace restfuzz
