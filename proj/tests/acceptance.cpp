// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "helpers.hpp"
#include "model_fixtures.hpp"
#include "restfuzz/mock_target.hpp"
#include "restfuzz/orchestrator.hpp"
#include "restfuzz/recommender.hpp"
#include "restfuzz/sequence_engine.hpp"

#include <httplib.h>

using namespace restfuzz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1: pass-rate formula

Outcome pass_rate_formula() {
  ResponseCounts c;
  c.pass2xx = 5;
  c.error5xx = 1;
  c.reject4xx = 2;
  bool ok = pass_rate(c) == 0.75;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> n(0, 100000);
  int checked = 0;
  while (checked < 1000) {
    ResponseCounts r;
    r.pass2xx = n(rng);
    r.reject4xx = n(rng);
    r.error5xx = n(rng);
    r.transport = n(rng);
    const auto ok_count = static_cast<long double>(r.pass2xx) + r.error5xx;
    const auto all = ok_count + r.reject4xx;
    if (all == 0) continue;
    ok = ok && std::abs(pass_rate(r) - static_cast<double>(ok_count / all)) <= 1e-12;
    ++checked;
  }
  return {ok, "0.75 exact, 1000 random vectors"};
}

// ---- 2: selection weights

std::vector<SequenceTemplate> seeds_of_lengths(const std::vector<std::size_t>& lengths) {
  std::vector<SequenceTemplate> out;
  for (auto l : lengths) {
    SequenceTemplate s;
    for (std::size_t k = 0; k < l; ++k) s.template_ids.push_back("T" + std::to_string(out.size()) + "_" + std::to_string(k));
    out.push_back(s);
  }
  return out;
}

Outcome selection_weights_check() {
  bool ok = std::abs(length_weight(1) - std::log10(2.0)) <= 1e-12 && std::abs(length_weight(9) - 1.0) <= 1e-12;

  const auto pair = seeds_of_lengths({1, 9});
  const double p1 = std::log10(2.0) / (std::log10(2.0) + 1.0);
  const auto weights = selection_weights(pair);
  ok = ok && std::abs(weights[0].probability - p1) <= 1e-12;
  Rng rng(7);
  const int draws = 100000;
  int ones = 0;
  for (int i = 0; i < draws; ++i) ones += select_seed(pair, rng).length() == 1;
  const double f1 = static_cast<double>(ones) / draws;
  ok = ok && std::abs(f1 - p1) <= 0.01;

  const auto nine = seeds_of_lengths({1, 2, 3, 4, 5, 6, 7, 8, 9});
  double total = 0;
  for (int i = 0; i < draws; ++i) total += static_cast<double>(select_seed(nine, rng).length());
  const double mean = total / draws;
  ok = ok && mean > 5.0;
  return {ok, "freq(l=1)=" + fmt("%.4f", f1) + " expected " + fmt("%.4f", p1) + ", mean length " + fmt("%.3f", mean)};
}

// ---- 3: gradient check

Outcome gradient_check() {
  Rng rng(2024);
  double worst = 0;
  std::string block;
  for (int instance = 0; instance < 20; ++instance) {
    std::uniform_int_distribution<int> vocab(3, 8), dim(2, 5), len(2, 6);
    const int v = vocab(rng);
    auto p = ModelParams::random(v, dim(rng), dim(rng), rng);
    std::uniform_int_distribution<int> tok(0, v - 1);
    TrainingExample ex;
    for (int k = len(rng); k > 0; --k) ex.push_back(tok(rng));
    const auto r = testutil::gradient_check(p, ex);
    if (r.worst_relative > worst) {
      worst = r.worst_relative;
      block = r.worst_block;
    }
  }
  return {worst < 1e-4, "worst relative error " + fmt("%.2e", worst) + " (" + block + ")"};
}

// ---- 4: learning oracle

Outcome learning_oracle() {
  Rng rng(5);
  const auto corpus = testutil::chain_corpus(400);
  const auto r = train(corpus, TrainConfig{}, rng);
  bool ok = r.val_accuracy && *r.val_accuracy >= 0.95 && r.wall_seconds < 60.0;
  double worst_freq = 1.0;
  for (int t = 0; t < 5; ++t) {
    const auto& chain = corpus[static_cast<std::size_t>(t) * 400].pairs;
    int hits = 0;
    for (int s = 0; s < 50; ++s) {
      const auto lists = generate_lists(r.params, r.vocab, "GET /t" + std::to_string(t), 1, rng,
                                        2 * r.longest_list + 2);
      hits += !lists.empty() && lists[0].pairs == chain;
    }
    worst_freq = std::min(worst_freq, hits / 50.0);
  }
  ok = ok && worst_freq > 0.9;
  return {ok, "val top-1 " + fmt("%.4f", r.val_accuracy.value_or(0)) + ", worst chain frequency " +
                  fmt("%.2f", worst_freq) + ", training " + fmt("%.1fs", r.wall_seconds)};
}

// ---- 5 and 8: bug discovery and replay

struct BugHits {
  bool uaf = false, undef = false, perpage = false, parentid = false;
  int found() const { return uaf + undef + perpage + parentid; }
};

BugHits classify(const std::vector<ErrorRecord>& errors) {
  BugHits h;
  for (const auto& e : errors) {
    if (e.key.status != 500) continue;
    const auto& t = e.key.template_id;
    if (t == "GET /groups/{id}/attributes" && e.replay.size() >= 3) h.uaf = true;
    if (t == "PUT /groups/{id}") h.undef = true;
    if (t == "GET /groups") h.perpage = true;
    if (t == "POST /groups") h.parentid = true;
  }
  return h;
}

FuzzConfig discovery_config(bool datadriven, const fs::path& dir) {
  FuzzConfig cfg;
  cfg.mode = FuzzMode::Miner;
  cfg.seed = 1;
  cfg.max_requests = 20000;
  cfg.train_every_requests = 5000;
  cfg.enable_uaf_checker = true;
  cfg.enable_datadriven_checker = datadriven;
  cfg.report_dir = dir.string();
  return cfg;
}

std::vector<ErrorRecord> discovery_errors;

Outcome bug_discovery(const CompiledGrammar& g, const fs::path& work) {
  mock::MockServer server(mock::BugConfig::all());
  server.start();
  auto client = make_http_client(server.base_url());
  const auto with = fuzz_loop(g, *client, discovery_config(true, work / "with"));
  const auto found = classify(with.errors);
  discovery_errors = with.errors;

  {
    std::lock_guard<std::mutex> lock(server.mutex());
    server.target().reset();
  }
  const auto without = fuzz_loop(g, *client, discovery_config(false, work / "without"));
  const auto found_without = classify(without.errors);
  server.stop();

  const bool ok = found.found() == 4 && !found_without.undef;
  std::string detail = "with checker: " + std::to_string(found.found()) + "/4 (uaf " +
                       std::to_string(found.uaf) + " undef " + std::to_string(found.undef) + " perpage " +
                       std::to_string(found.perpage) + " parentid " + std::to_string(found.parentid) +
                       "), without: undef " + std::to_string(found_without.undef) + ", " +
                       std::to_string(with.errors.size()) + " buckets";
  return {ok, detail};
}

Outcome replay_fidelity() {
  if (discovery_errors.empty()) return {false, "no error records from criterion 5"};
  mock::MockServer server(mock::BugConfig::all());
  server.start();
  httplib::Client control(server.base_url());
  auto client = make_http_client(server.base_url());
  std::size_t reproduced = 0;
  for (const auto& e : discovery_errors) {
    auto reset = control.Post("/__reset");
    if (!reset || reset->status / 100 != 2) break;
    const auto report = replay_file(e.replay_file, *client);
    reproduced += report.matches() && report.expected == e.classes;
  }
  server.stop();
  return {reproduced == discovery_errors.size(),
          std::to_string(reproduced) + "/" + std::to_string(discovery_errors.size()) + " replays reproduced"};
}

// ---- 6: ablation analogues

struct ModeStats {
  std::map<std::size_t, std::uint64_t> lengths;
  ResponseCounts after_warmup;
  double coverage_sum = 0;
  std::vector<double> pass_rates;
};

std::size_t coverage_over_http(const std::string& base) {
  httplib::Client c(base);
  auto r = c.Get("/__coverage");
  if (!r) return 0;
  std::size_t hit = 0;
  const auto counts = nlohmann::json::parse(r->body);
  for (const auto& branch : counts.items()) hit += branch.value().get<std::uint64_t>() > 0;
  return hit;
}

Outcome ablation(const CompiledGrammar& g) {
  ModeStats miner, baseline;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto* stats : {&miner, &baseline}) {
      mock::MockServer server(mock::BugConfig::all());
      server.start();
      auto client = make_http_client(server.base_url());
      FuzzConfig cfg;
      cfg.mode = stats == &miner ? FuzzMode::Miner : FuzzMode::Baseline;
      cfg.seed = seed;
      cfg.max_requests = 10000;
      cfg.train_every_requests = 2500;
      const auto r = fuzz_loop(g, *client, cfg);
      for (const auto& [len, n] : r.metrics.length_histogram) stats->lengths[len] += n;
      const auto& w = r.metrics.counts_after_warmup;
      stats->after_warmup.pass2xx += w.pass2xx;
      stats->after_warmup.reject4xx += w.reject4xx;
      stats->after_warmup.error5xx += w.error5xx;
      stats->pass_rates.push_back(pass_rate(w));
      stats->coverage_sum += static_cast<double>(coverage_over_http(server.base_url()));
      server.stop();
    }
  }
  RunMetrics m, b;
  m.length_histogram = miner.lengths;
  b.length_histogram = baseline.lengths;
  const double median_m = median_length(m).value_or(0), median_b = median_length(b).value_or(0);
  const double rate_m = pass_rate(miner.after_warmup), rate_b = pass_rate(baseline.after_warmup);
  const double cov_m = miner.coverage_sum / 5, cov_b = baseline.coverage_sum / 5;
  std::uint64_t short_b = 0, total_b = 0;
  for (const auto& [len, n] : baseline.lengths) {
    total_b += n;
    if (len <= 2) short_b += n;
  }
  const bool a = median_m > median_b;
  const bool bb = rate_m - rate_b >= 0.10;
  const bool c = cov_m >= cov_b;
  std::string detail = std::string("(a) median length ") + fmt("%.1f", median_m) + " vs " + fmt("%.1f", median_b) +
                       (a ? " ok" : " FAIL") + "; (b) pass rate after warmup " + fmt("%.4f", rate_m) + " vs " +
                       fmt("%.4f", rate_b) + (bb ? " ok" : " FAIL") + "; (c) coverage " + fmt("%.1f", cov_m) +
                       " vs " + fmt("%.1f", cov_b) + (c ? " ok" : " FAIL") + "; baseline share of lengths 1-2 " +
                       fmt("%.2f", static_cast<double>(short_b) / static_cast<double>(std::max<std::uint64_t>(1, total_b)));
  return {a && bb && c, detail};
}

// ---- 7: checker precision

Outcome checker_precision(const CompiledGrammar& g) {
  mock::MockServer server(mock::BugConfig{});
  server.start();
  auto client = make_http_client(server.base_url());
  FuzzConfig cfg;
  cfg.mode = FuzzMode::Miner;
  cfg.seed = 3;
  cfg.max_requests = 50000;
  cfg.train_every_requests = 10000;
  cfg.enable_uaf_checker = true;
  cfg.enable_datadriven_checker = true;
  const auto r = fuzz_loop(g, *client, cfg);
  server.stop();
  return {r.errors.empty() && r.metrics.requests >= 50000,
          std::to_string(r.errors.size()) + " error records over " + std::to_string(r.metrics.requests) + " requests"};
}

}  // namespace

int main() {
  const auto g = testutil::mock_grammar();
  const auto work = fs::temp_directory_path() / ("restfuzz_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);

  struct Criterion {
    int id;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, 1, pass_rate_formula},
      {2, 5, selection_weights_check},
      {3, 30, gradient_check},
      {4, 120, learning_oracle},
      {5, 300, [&] { return bug_discovery(g, work); }},
      {6, 900, [&] { return ablation(g); }},
      {7, 300, [&] { return checker_precision(g); }},
      {8, 60, replay_fidelity},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %d: %s  %s  [%.2fs, limit %.0fs%s]\n", c.id, pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs, c.limit_seconds, in_time ? "" : ", too slow");
    std::fflush(stdout);
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
