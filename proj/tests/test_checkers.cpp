#include <doctest.h>

#include "helpers.hpp"
#include "restfuzz/checkers.hpp"
#include "restfuzz/mock_target.hpp"

using namespace restfuzz;
using namespace restfuzz::mock;

namespace {

// Sends `ids` against `client` until a run comes back all 2xx.
ExecutedSequence passing_run(const CompiledGrammar& g, Client& client, MockTarget& target,
                             const std::vector<std::string>& ids) {
  RenderContext ctx{g};
  SendFn send = [&](const ReadyRequest& r) { return client.send(r); };
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    target.reset();
    Rng rng(seed);
    auto ex = render_sequence({ids}, ctx, rng, send);
    bool ok = !ex.aborted && ex.responses.size() == ids.size();
    for (const auto& r : ex.responses) ok = ok && r.cls == ResponseClass::Pass2xx;
    if (ok) return ex;
  }
  FAIL("no passing run");
  return {};
}

CollectionStore store_with(const CompiledGrammar& g, const std::string& tmpl,
                           std::map<std::string, std::string> rendered) {
  CollectionStore store;
  store.record_request_outcome(g.at(tmpl), rendered, ResponseClass::Pass2xx, 1);
  return store;
}

}  // namespace

TEST_CASE("inject_pair follows method convention") {
  ReadyRequest get;
  get.method = HttpMethod::Get;
  CHECK(inject_pair(get, {"a", "1"}).query.at("a") == "1");
  ReadyRequest del;
  del.method = HttpMethod::Delete;
  CHECK(inject_pair(del, {"a", "1"}).body.empty());
  ReadyRequest put;
  put.method = HttpMethod::Put;
  const auto out = inject_pair(put, {"a", "1"});
  CHECK(out.body.at("a") == "1");
  CHECK(out.query.empty());
}

TEST_CASE("data-driven checker") {
  const auto g = testutil::mock_grammar();
  const auto store = store_with(g, "POST /projects", {{"initialize_with_readme", "true"}});
  REQUIRE(store.undefined_pairs_for(g.at("PUT /groups/{id}")).size() == 1);

  for (bool armed : {true, false}) {
    CAPTURE(armed);
    MockTarget target(armed ? BugConfig{{Bug::UndefinedParam}, 0} : BugConfig{});
    auto client = make_in_process_client(target);
    SendFn send = [&](const ReadyRequest& r) { return client->send(r); };
    const auto ex = passing_run(g, *client, target, {"POST /groups", "PUT /groups/{id}"});

    Rng rng(1);
    const auto result = datadriven_check(ex, g, store, rng, send);
    CHECK(result.ran);
    REQUIRE(result.sent.size() == 2);
    // Exactly one parameter added, to the last request only.
    CHECK(result.sent[0].query == ex.requests[0].query);
    CHECK(result.sent[0].body == ex.requests[0].body);
    auto expected_body = ex.requests[1].body;
    expected_body["initialize_with_readme"] = "true";
    CHECK(result.sent[1].body == expected_body);
    CHECK(result.sent[1].query == ex.requests[1].query);
    // The replay binds the id produced during the replay itself.
    CHECK(result.sent[1].path_params.at("id") != ex.requests[1].path_params.at("id"));

    REQUIRE(result.violation.has_value() == armed);
    if (armed) {
      const auto& v = *result.violation;
      CHECK(v.kind == ViolationKind::IncorrectParamUsage);
      CHECK(v.offending == 1);
      CHECK(v.response().status == 500);
      CHECK(v.injected == ParamValuePair{"initialize_with_readme", "true"});
    }
  }
}

TEST_CASE("data-driven checker: accepted extra parameter is not a violation") {
  const auto g = testutil::mock_grammar();
  const auto store = store_with(g, "GET /groups", {{"min_access_level", "1"}});
  MockTarget target(BugConfig::all());
  auto client = make_in_process_client(target);
  SendFn send = [&](const ReadyRequest& r) { return client->send(r); };
  const auto ex = passing_run(g, *client, target, {"POST /groups", "PUT /groups/{id}"});
  Rng rng(3);
  const auto result = datadriven_check(ex, g, store, rng, send);
  CHECK(result.ran);
  CHECK_FALSE(result.violation);
  CHECK(result.responses.back().status == 200);
}

TEST_CASE("data-driven checker: preconditions") {
  const auto g = testutil::mock_grammar();
  MockTarget target(BugConfig::all());
  auto client = make_in_process_client(target);
  int sent = 0;
  SendFn send = [&](const ReadyRequest& r) {
    ++sent;
    return client->send(r);
  };
  const auto ex = passing_run(g, *client, target, {"POST /groups", "PUT /groups/{id}"});
  Rng rng(0);

  SUBCASE("empty store") {
    CollectionStore empty;
    CHECK_FALSE(datadriven_check(ex, g, empty, rng, send).ran);
  }
  const auto store = store_with(g, "POST /projects", {{"initialize_with_readme", "true"}});
  SUBCASE("aborted") {
    auto bad = ex;
    bad.aborted = true;
    CHECK_FALSE(datadriven_check(bad, g, store, rng, send).ran);
  }
  SUBCASE("last response not 2xx") {
    auto bad = ex;
    bad.responses.back().cls = ResponseClass::Reject4xx;
    CHECK_FALSE(datadriven_check(bad, g, store, rng, send).ran);
  }
  SUBCASE("truncated") {
    auto bad = ex;
    bad.requests.pop_back();
    bad.responses.pop_back();
    CHECK_FALSE(datadriven_check(bad, g, store, rng, send).ran);
  }
  CHECK(sent == 0);
}

TEST_CASE("use-after-free triples") {
  const auto g = testutil::mock_grammar();
  const auto triples = uaf_triples(g);
  // Per type: one create, one delete, two GET consumers.
  std::size_t group_triples = 0;
  for (const auto& t : triples) {
    CHECK(g.at(t.create).method == HttpMethod::Post);
    CHECK(g.at(t.remove).method == HttpMethod::Delete);
    CHECK(g.at(t.access).method == HttpMethod::Get);
    group_triples += t.resource_type == "group";
  }
  CHECK(group_triples == 2);
  CHECK(triples.size() == 4);

  UafRotation rot(g);
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < 2 * triples.size(); ++i) seen.push_back(rot.next().access);
  for (std::size_t i = 0; i < triples.size(); ++i) CHECK(seen[i] == seen[i + triples.size()]);

  CompiledGrammar none;
  UafRotation empty(none);
  CHECK(empty.empty());
  CHECK_THROWS_AS(empty.next(), std::logic_error);
}

TEST_CASE("use-after-free checker") {
  const auto g = testutil::mock_grammar();
  const UafTriple attributes{"group", "POST /groups", "DELETE /groups/{id}", "GET /groups/{id}/attributes"};
  const UafTriple show{"group", "POST /groups", "DELETE /groups/{id}", "GET /groups/{id}"};

  MockTarget armed({{Bug::UseAfterFree}, 0});
  auto armed_client = make_in_process_client(armed);
  SendFn send_armed = [&](const ReadyRequest& r) { return armed_client->send(r); };

  const auto hit = use_after_free_check(g, attributes, send_armed);
  REQUIRE(hit.violation);
  CHECK(hit.violation->kind == ViolationKind::UseAfterFree);
  CHECK(hit.violation->replay.size() == 3);
  CHECK(hit.violation->response().status == 500);
  CHECK(hit.violation->deleted_id == hit.sent[1].path_params.at("id"));
  CHECK(hit.sent[2].path_params.at("id") == hit.sent[1].path_params.at("id"));

  CHECK_FALSE(use_after_free_check(g, show, send_armed).violation);

  MockTarget clean;
  auto clean_client = make_in_process_client(clean);
  SendFn send_clean = [&](const ReadyRequest& r) { return clean_client->send(r); };
  const auto miss = use_after_free_check(g, attributes, send_clean);
  CHECK(miss.ran);
  CHECK_FALSE(miss.violation);
  CHECK(miss.responses.back().status == 404);

  SUBCASE("project create needs a group first") {
    const UafTriple project{"project", "POST /projects", "DELETE /projects/{id}",
                            "GET /projects/{id}/attributes"};
    const auto r = use_after_free_check(g, project, send_clean);
    REQUIRE(r.sent.size() == 4);
    CHECK(r.sent[0].template_id == "POST /groups");
    CHECK_FALSE(r.violation);
  }

  SUBCASE("create rejected") {
    SendFn reject = [](const ReadyRequest&) { return ResponseRecord{422, ResponseClass::Reject4xx, "{}"}; };
    CheckResult partial;
    CHECK_THROWS_AS(use_after_free_check(g, attributes, reject, {}, &partial), SetupFailed);
    CHECK(partial.sent.size() == 1);
  }

  SUBCASE("headers are attached") {
    std::vector<ReadyRequest> seen;
    SendFn record = [&](const ReadyRequest& r) {
      seen.push_back(r);
      return clean_client->send(r);
    };
    use_after_free_check(g, attributes, record, {{"Authorization", "Bearer t"}});
    REQUIRE(seen.size() == 3);
    for (const auto& r : seen) CHECK(r.headers.at("Authorization") == "Bearer t");
  }
}
