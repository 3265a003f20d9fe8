// restfuzz command line: fuzz, replay, serve.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "restfuzz/grammar.hpp"
#include "restfuzz/mock_target.hpp"
#include "restfuzz/orchestrator.hpp"

// After Eigen: <resolv.h> defines _res.
#include <httplib.h>

namespace {

int run_fuzz(const std::string& spec, const std::string& target, restfuzz::FuzzConfig cfg,
             const std::string& auth_token) {
  const auto grammar = restfuzz::load_spec_file(spec);
  if (!auth_token.empty()) cfg.headers["Authorization"] = "Bearer " + auth_token;
  auto client = restfuzz::make_http_client(target);
  try {
    const auto result = restfuzz::fuzz_loop(grammar, *client, cfg);
    const auto& m = result.metrics;
    std::cout << "requests=" << m.requests << " iterations=" << m.iterations
              << " unique_templates=" << restfuzz::unique_request_templates(m)
              << " unique_errors=" << m.unique_errors;
    try {
      std::cout << " pass_rate=" << restfuzz::pass_rate(m.counts);
    } catch (const restfuzz::NoResponses&) {
    }
    std::cout << '\n';
    for (const auto& e : result.errors)
      std::cout << "  " << restfuzz::bucket_name(e.key) << " hits=" << e.hits << '\n';
  } catch (const restfuzz::TargetUnreachable& e) {
    std::cerr << "error: " << e.what() << " (" << target << ")\n";
    return 2;
  }
  return 0;
}

int run_replay(const std::string& file, const std::string& target, bool reset) {
  if (reset) {
    httplib::Client c(target);
    auto r = c.Post("/__reset");
    if (!r || r->status / 100 != 2) {
      std::cerr << "error: reset failed\n";
      return 2;
    }
  }
  auto client = restfuzz::make_http_client(target);
  const auto report = restfuzz::replay_file(file, *client);
  for (std::size_t k = 0; k < report.responses.size(); ++k) {
    const auto& r = report.responses[k];
    std::cout << k << ' ' << r.status << ' ' << restfuzz::to_string(r.cls);
    if (k < report.expected.size()) std::cout << " expected=" << restfuzz::to_string(report.expected[k]);
    std::cout << '\n';
  }
  if (report.expected.empty()) return 0;
  std::cout << (report.matches() ? "reproduced" : "NOT reproduced") << '\n';
  return report.matches() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stateful REST API fuzzer"};
  app.require_subcommand(1);

  auto* fuzz = app.add_subcommand("fuzz", "fuzz a target");
  std::string spec, target, mode = "miner", auth_token, report_dir, dump_dir, journal;
  std::uint64_t seed = 0, max_requests = 0, train_every = 0;
  double duration = 0, train_interval = 7200;
  std::size_t max_len = 10;
  bool uaf = false, datadriven = false;
  fuzz->add_option("--spec", spec, "grammar file")->required()->check(CLI::ExistingFile);
  fuzz->add_option("--target", target, "base url")->required();
  fuzz->add_option("--mode", mode)
      ->check(CLI::IsMember({"miner", "baseline", "seq-only", "model-only", "rec1", "reclist"}));
  auto* dur = fuzz->add_option("--duration", duration, "seconds");
  auto* maxr = fuzz->add_option("--max-requests", max_requests);
  dur->excludes(maxr);
  fuzz->add_option("--seed", seed);
  auto* interval = fuzz->add_option("--train-interval", train_interval, "seconds between retrains");
  auto* every = fuzz->add_option("--train-every", train_every, "retrain synchronously every N requests");
  interval->excludes(every);
  fuzz->add_flag("--enable-uaf-checker", uaf);
  fuzz->add_flag("--enable-datadriven-checker", datadriven);
  fuzz->add_option("--report-dir", report_dir);
  fuzz->add_option("--max-seq-len", max_len)->check(CLI::PositiveNumber);
  fuzz->add_option("--auth-token", auth_token, "static bearer token");
  fuzz->add_option("--dump-weights", dump_dir, "directory for per-iteration weight dumps");
  fuzz->add_option("--journal", journal, "collection journal (jsonl)");

  auto* replay = app.add_subcommand("replay", "re-send a stored replay file");
  std::string replay_file_path, replay_target;
  bool reset = false;
  replay->add_option("--file", replay_file_path)->required()->check(CLI::ExistingFile);
  replay->add_option("--target", replay_target)->required();
  replay->add_flag("--reset", reset, "POST /__reset on the target first");

  auto* serve = app.add_subcommand("serve", "run the mock target");
  int port = 8080;
  std::string bugs;
  std::uint64_t serve_seed = 0;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--bugs", bugs, "b-uaf,b-undef,b-perpage,b-parentid");
  serve->add_option("--seed", serve_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fuzz) {
      restfuzz::FuzzConfig cfg;
      cfg.mode = restfuzz::parse_fuzz_mode(mode);
      cfg.seed = seed;
      if (*maxr) cfg.max_requests = max_requests;
      if (*dur) cfg.duration_seconds = duration;
      cfg.train_interval_seconds = train_interval;
      if (*every) cfg.train_every_requests = train_every;
      cfg.enable_uaf_checker = uaf;
      cfg.enable_datadriven_checker = datadriven;
      cfg.max_sequence_length = max_len;
      if (!report_dir.empty()) cfg.report_dir = report_dir;
      if (!dump_dir.empty()) cfg.dump_weights_dir = dump_dir;
      if (!journal.empty()) cfg.journal_file = journal;
      return run_fuzz(spec, target, cfg, auth_token);
    }
    if (*replay) return run_replay(replay_file_path, replay_target, reset);
    if (*serve) {
      restfuzz::mock::MockServer server({restfuzz::mock::parse_bug_list(bugs), serve_seed});
      std::cerr << "serving on " << host << ":" << port << '\n';
      server.listen_blocking(host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
