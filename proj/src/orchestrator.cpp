#include "restfuzz/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>

namespace restfuzz {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(FuzzMode mode) {
  switch (mode) {
    case FuzzMode::Miner: return "miner";
    case FuzzMode::Baseline: return "baseline";
    case FuzzMode::SeqOnly: return "seq-only";
    case FuzzMode::ModelOnly: return "model-only";
    case FuzzMode::Rec1: return "rec1";
    case FuzzMode::RecList: return "reclist";
  }
  return "miner";
}

FuzzMode parse_fuzz_mode(std::string_view text) {
  for (auto m : {FuzzMode::Miner, FuzzMode::Baseline, FuzzMode::SeqOnly, FuzzMode::ModelOnly,
                 FuzzMode::Rec1, FuzzMode::RecList})
    if (to_string(m) == text) return m;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

bool uses_seed_selection(FuzzMode mode) { return mode == FuzzMode::Miner || mode == FuzzMode::SeqOnly; }
bool uses_model(FuzzMode mode) { return mode == FuzzMode::Miner || mode == FuzzMode::ModelOnly; }

RenderMode render_mode_for(FuzzMode mode) {
  switch (mode) {
    case FuzzMode::Miner:
    case FuzzMode::ModelOnly: return RenderMode::Model;
    case FuzzMode::Rec1: return RenderMode::Rec1;
    case FuzzMode::RecList: return RenderMode::RecList;
    default: return RenderMode::Traditional;
  }
}

void ResponseCounts::add(ResponseClass cls) {
  switch (cls) {
    case ResponseClass::Pass2xx: ++pass2xx; break;
    case ResponseClass::Reject4xx: ++reject4xx; break;
    case ResponseClass::Error5xx: ++error5xx; break;
    case ResponseClass::Transport: ++transport; break;
  }
}

double pass_rate(const ResponseCounts& c) {
  const auto http = c.pass2xx + c.reject4xx + c.error5xx;
  if (http == 0) throw NoResponses();
  return static_cast<double>(c.pass2xx + c.error5xx) / static_cast<double>(http);
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Response5xx: return "response5xx";
    case ErrorKind::IncorrectParamUsage: return "IncorrectParamUsage";
    case ErrorKind::UseAfterFree: return "UseAfterFree";
  }
  return "response5xx";
}

std::uint64_t body_signature(std::string_view body) {
  std::string lowered(body.size(), '\0');
  std::transform(body.begin(), body.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::string stripped;
  stripped.reserve(lowered.size());
  for (std::size_t i = 0; i < lowered.size();) {
    std::size_t j = i;
    while (j < lowered.size() && std::isxdigit(static_cast<unsigned char>(lowered[j]))) ++j;
    if (j - i >= 8) {
      i = j;
      continue;
    }
    for (; i < j; ++i)
      if (!std::isdigit(static_cast<unsigned char>(lowered[i]))) stripped.push_back(lowered[i]);
    if (i < lowered.size()) stripped.push_back(lowered[i++]);
  }
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : stripped) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string bucket_name(const BucketKey& key) {
  std::string tid;
  for (char c : key.template_id) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      tid.push_back(c);
    else if (!tid.empty() && tid.back() != '_')
      tid.push_back('_');
  }
  while (!tid.empty() && tid.back() == '_') tid.pop_back();
  char sig[17];
  std::snprintf(sig, sizeof sig, "%016llx", static_cast<unsigned long long>(key.signature));
  return tid + "-" + std::to_string(key.status) + "-" + std::string(to_string(key.kind)) + "-" + sig;
}

json to_json(const ErrorRecord& r) {
  json classes = json::array();
  for (auto c : r.classes) classes.push_back(std::string(to_string(c)));
  char sig[17];
  std::snprintf(sig, sizeof sig, "%016llx", static_cast<unsigned long long>(r.key.signature));
  return {{"bucket", bucket_name(r.key)},
          {"template", r.key.template_id},
          {"status", r.key.status},
          {"kind", std::string(to_string(r.key.kind))},
          {"signature", sig},
          {"replay_file", r.replay_file},
          {"first_seen_iteration", r.first_seen_iteration},
          {"hits", r.hits},
          {"classes", classes},
          {"detail", r.detail}};
}

ErrorBuckets::ErrorBuckets(std::optional<std::string> replay_dir) : replay_dir_(std::move(replay_dir)) {
  if (replay_dir_) fs::create_directories(*replay_dir_);
}

bool ErrorBuckets::bucket_error(const std::vector<ReadyRequest>& replay,
                                const std::vector<ResponseRecord>& responses, std::size_t failing,
                                ErrorKind kind, std::uint64_t iteration, json detail) {
  const auto& response = responses.at(failing);
  BucketKey key{replay.at(failing).template_id, response.status, kind, body_signature(response.body)};
  if (auto it = records_.find(key); it != records_.end()) {
    ++it->second.hits;
    return false;
  }
  ErrorRecord rec;
  rec.key = key;
  rec.first_seen_iteration = iteration;
  rec.hits = 1;
  rec.replay.assign(replay.begin(), replay.begin() + static_cast<std::ptrdiff_t>(failing) + 1);
  for (std::size_t k = 0; k <= failing; ++k) rec.classes.push_back(responses[k].cls);
  rec.detail = std::move(detail);
  if (replay_dir_) {
    const auto path = fs::path(*replay_dir_) / (bucket_name(key) + ".jsonl");
    std::ofstream out(path);
    for (std::size_t k = 0; k < rec.replay.size(); ++k) {
      auto line = to_json(rec.replay[k]);
      line["expect"] = std::string(to_string(rec.classes[k]));
      out << line.dump() << '\n';
    }
    rec.replay_file = path.string();
  }
  records_.emplace(std::move(key), std::move(rec));
  return true;
}

json RunMetrics::to_json() const {
  auto counts_json = [](const ResponseCounts& c) {
    json j = {{"2xx", c.pass2xx}, {"4xx", c.reject4xx}, {"5xx", c.error5xx}, {"transport", c.transport}};
    try {
      j["pass_rate"] = pass_rate(c);
    } catch (const NoResponses&) {
      j["pass_rate"] = nullptr;
    }
    return j;
  };
  json hist = json::object();
  for (const auto& [len, n] : length_histogram) hist[std::to_string(len)] = n;
  const auto median = median_length(*this);
  return {{"requests", requests},
          {"iterations", iterations},
          {"responses", counts_json(counts)},
          {"responses_after_warmup", counts_json(counts_after_warmup)},
          {"warmed_up", warmed_up},
          {"unique_request_templates", success_templates.size()},
          {"success_templates", success_templates},
          {"unique_errors", unique_errors},
          {"length_histogram", hist},
          {"median_length", median ? json(*median) : json(nullptr)},
          {"training_iterations", training_iterations},
          {"seeds", seeds},
          {"wall_seconds", wall_seconds}};
}

std::size_t unique_request_templates(const RunMetrics& metrics) { return metrics.success_templates.size(); }

std::optional<double> median_length(const RunMetrics& metrics) {
  std::uint64_t total = 0;
  for (const auto& [len, n] : metrics.length_histogram) total += n;
  if (total == 0) return std::nullopt;
  auto nth = [&](std::uint64_t rank) {
    std::uint64_t seen = 0;
    for (const auto& [len, n] : metrics.length_histogram) {
      seen += n;
      if (seen > rank) return static_cast<double>(len);
    }
    return static_cast<double>(metrics.length_histogram.rbegin()->first);
  };
  if (total % 2) return nth(total / 2);
  return 0.5 * (nth(total / 2 - 1) + nth(total / 2));
}

namespace {

Rng stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return Rng(seq);
}

class TrainLog {
 public:
  TrainLog(const std::optional<std::string>& dir, std::ostream* echo) : echo_(echo) {
    if (dir) file_.open(fs::path(*dir) / "train.log");
  }
  void write(const std::string& line) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (file_.is_open()) file_ << line << '\n' << std::flush;
    if (echo_) *echo_ << line << '\n';
  }

 private:
  std::mutex mutex_;
  std::ofstream file_;
  std::ostream* echo_;
};

std::string format_epoch(std::uint64_t iteration, const EpochStats& s) {
  char buf[160];
  char acc[16] = "n/a";
  if (s.val_accuracy) std::snprintf(acc, sizeof acc, "%.4f", *s.val_accuracy);
  std::snprintf(buf, sizeof buf, "iteration=%llu epoch=%d loss=%.5f val_acc=%s wall=%.2fs",
                static_cast<unsigned long long>(iteration), s.epoch, s.train_loss, acc, s.wall_seconds);
  return buf;
}

}  // namespace

FuzzResult fuzz_loop(const CompiledGrammar& grammar, Client& client, const FuzzConfig& config) {
  if (!client.reachable()) throw TargetUnreachable("target is not reachable");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  if (config.report_dir) fs::create_directories(*config.report_dir);
  std::optional<std::string> replay_dir;
  if (config.report_dir) replay_dir = (fs::path(*config.report_dir) / "replays").string();

  Rng selection_rng = stream(config.seed, 1);
  Rng render_rng = stream(config.seed, 2);
  Rng checker_rng = stream(config.seed, 3);
  Rng trainer_rng = stream(config.seed, 4);

  FuzzResult result;
  RunMetrics& m = result.metrics;
  CollectionStore store;
  std::ofstream journal;
  if (config.journal_file) {
    journal.open(*config.journal_file);
    store.set_journal(&journal);
  }
  ErrorBuckets buckets(replay_dir);
  SnapshotStore snapshots(config.snapshot_cap);
  TrainLog train_log(config.report_dir, config.log);

  std::unique_ptr<CandidateScheduler> scheduler;
  SeedScheduler* seed_scheduler = nullptr;
  if (uses_seed_selection(config.mode)) {
    auto s = std::make_unique<SeedScheduler>(grammar, config.max_sequence_length);
    seed_scheduler = s.get();
    scheduler = std::move(s);
  } else {
    scheduler = std::make_unique<FrontierScheduler>(grammar, config.max_sequence_length);
  }
  UafRotation uaf(grammar);

  auto on_iteration = [&](std::uint64_t iteration, const IterationResult& r) {
    std::size_t lists = 0;
    for (const auto& [tid, l] : r.lists) lists += l.size();
    char buf[160];
    std::snprintf(buf, sizeof buf, "iteration=%llu done vocab=%d lists=%zu val_acc=%s wall=%.2fs",
                  static_cast<unsigned long long>(iteration), r.training.vocab.size(), lists,
                  r.training.val_accuracy ? std::to_string(*r.training.val_accuracy).c_str() : "n/a",
                  r.training.wall_seconds);
    train_log.write(buf);
    if (config.dump_weights_dir) dump_weights(r.training.params, *config.dump_weights_dir, iteration);
  };
  std::uint64_t sync_iterations = 0;
  std::uint64_t current_iteration = 1;
  auto on_epoch = [&](const EpochStats& s) { train_log.write(format_epoch(current_iteration, s)); };

  const bool model = uses_model(config.mode);
  const bool sync_training = config.train_every_requests.has_value();
  std::unique_ptr<RecommenderWorker> worker;
  if (model && !sync_training) {
    worker = std::make_unique<RecommenderWorker>(
        grammar, config.recommender, snapshots, trainer_rng(),
        [&](std::uint64_t it, const IterationResult& r) { on_iteration(it, r); },
        [&](const EpochStats& s) { train_log.write(format_epoch(0, s)); });
  }

  SendFn send = [&](const ReadyRequest& req) {
    auto response = client.send(req);
    ++m.requests;
    m.counts.add(response.cls);
    if (m.warmed_up) m.counts_after_warmup.add(response.cls);
    if (response.cls == ResponseClass::Pass2xx) m.success_templates.insert(req.template_id);
    return response;
  };

  auto budget_left = [&] {
    if (config.max_requests && m.requests >= *config.max_requests) return false;
    if (config.max_iterations && m.iterations >= *config.max_iterations) return false;
    if (config.duration_seconds && elapsed() >= *config.duration_seconds) return false;
    return true;
  };

  std::uint64_t next_train_request = sync_training ? *config.train_every_requests : 0;
  double next_train_time = config.train_interval_seconds;
  auto maybe_train = [&] {
    bool due = false;
    if (sync_training) {
      if (*config.train_every_requests > 0 && m.requests >= next_train_request) {
        due = true;
        while (next_train_request <= m.requests) next_train_request += *config.train_every_requests;
      }
    } else if (config.train_interval_seconds > 0 && elapsed() >= next_train_time) {
      due = true;
      while (next_train_time <= elapsed()) next_train_time += config.train_interval_seconds;
    }
    if (!due) return;
    if (!m.warmed_up) {
      m.warmed_up = true;
      m.counts_after_warmup = {};
    }
    if (!model) return;
    auto corpus = store.training_corpus(0);
    if (corpus.empty()) return;
    if (sync_training) {
      current_iteration = ++sync_iterations;
      auto r = run_training_iteration(corpus, grammar, config.recommender, trainer_rng, on_epoch);
      snapshots.publish(r.lists);
      on_iteration(sync_iterations, r);
    } else {
      worker->submit(std::move(corpus));
    }
  };

  RenderContext ctx{grammar, render_mode_for(config.mode), nullptr, &store, config.headers};
  int idle_batches = 0;
  while (budget_left() && !grammar.templates.empty()) {
    auto batch = scheduler->next_batch(selection_rng);
    if (batch.empty()) {
      if (++idle_batches > 1000) break;
      continue;
    }
    idle_batches = 0;
    for (const auto& candidate : batch) {
      if (!budget_left()) break;
      const auto iteration = ++m.iterations;
      if (config.record_stream) result.executed.push_back(candidate);
      if (ctx.mode == RenderMode::Model) ctx.lists = snapshots.current();

      auto executed = render_sequence(candidate, ctx, render_rng, send);
      for (std::size_t k = 0; k < executed.requests.size(); ++k) {
        const auto& req = executed.requests[k];
        store.record_request_outcome(grammar.at(req.template_id), rendered_values(req),
                                     executed.responses[k].cls, iteration);
        if (executed.responses[k].cls == ResponseClass::Error5xx)
          buckets.bucket_error(executed.requests, executed.responses, k, ErrorKind::Response5xx, iteration);
      }
      if (!executed.requests.empty()) ++m.length_histogram[executed.requests.size()];

      const auto outcome = executed.aborted ? ExtensionResult::Failed
                                            : classify_extension(candidate, executed.classes());
      scheduler->report(candidate, outcome);
      if (!executed.aborted && store.admit_sequence(executed.steps, candidate.length(), iteration) &&
          seed_scheduler)
        seed_scheduler->add_seed(candidate.template_ids);

      if (config.enable_datadriven_checker) {
        auto check = datadriven_check(executed, grammar, store, checker_rng, send);
        if (check.violation) {
          const auto& v = *check.violation;
          buckets.bucket_error(v.replay, v.responses, v.offending, ErrorKind::IncorrectParamUsage,
                               iteration,
                               {{"injected", {{"param", v.injected->param_name}, {"value", v.injected->value}}}});
        }
      }
      if (config.enable_uaf_checker && !uaf.empty()) {
        try {
          auto check = use_after_free_check(grammar, uaf.next(), send, config.headers);
          if (check.violation) {
            const auto& v = *check.violation;
            buckets.bucket_error(v.replay, v.responses, v.offending, ErrorKind::UseAfterFree, iteration,
                                 {{"deleted_id", *v.deleted_id}});
          }
        } catch (const SetupFailed&) {
        }
      }
      maybe_train();
    }
  }

  if (worker) worker.reset();
  m.training_iterations = sync_training ? sync_iterations : snapshots.publications();
  m.unique_errors = buckets.size();
  m.seeds = store.seeds().size();
  m.wall_seconds = elapsed();
  for (const auto& [key, rec] : buckets.records()) result.errors.push_back(rec);

  if (config.report_dir) {
    const fs::path dir(*config.report_dir);
    auto metrics = m.to_json();
    metrics["mode"] = std::string(to_string(config.mode));
    metrics["seed"] = config.seed;
    std::ofstream(dir / "metrics.json") << metrics.dump(2) << '\n';
    std::ofstream errors(dir / "errors.jsonl");
    for (const auto& rec : result.errors) errors << to_json(rec).dump() << '\n';
    std::ofstream lengths(dir / "lengths.csv");
    lengths << "length,count\n";
    for (const auto& [len, n] : m.length_histogram) lengths << len << ',' << n << '\n';
  }
  return result;
}

bool ReplayReport::matches() const {
  if (expected.size() != responses.size()) return false;
  for (std::size_t k = 0; k < expected.size(); ++k)
    if (expected[k] != responses[k].cls) return false;
  return true;
}

ReplayReport replay_file(const std::string& path, Client& client) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay file " + path);
  std::vector<ReadyRequest> requests;
  ReplayReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    requests.push_back(ready_request_from_json(j));
    if (j.contains("expect")) report.expected.push_back(parse_response_class(j.at("expect").get<std::string>()));
  }
  auto outcome = replay_requests(requests, [&](const ReadyRequest& r) { return client.send(r); });
  report.responses = std::move(outcome.responses);
  return report;
}

}  // namespace restfuzz
