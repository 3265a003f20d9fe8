#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "helpers.hpp"
#include "restfuzz/collection_store.hpp"

using namespace restfuzz;

namespace {

const CompiledGrammar& grammar() {
  static const auto g = testutil::mock_grammar();
  return g;
}

std::map<std::string, std::string> show_params(const std::string& with_projects) {
  return {{"id", "7"}, {"with_custom_attributes", "false"}, {"with_projects", with_projects}};
}

}  // namespace

TEST_CASE("only non-default, non-consumer values become observations") {
  CollectionStore store;
  const auto& get = grammar().at("GET /groups/{id}");
  store.record_request_outcome(get, show_params("false"), ResponseClass::Pass2xx, 1);
  REQUIRE(store.pairs().size() == 1);
  CHECK(store.pairs()[0].pair == ParamValuePair{"with_projects", "false"});
  CHECK(store.pairs()[0].response_class == ResponseClass::Pass2xx);
}

TEST_CASE("4xx and transport record nothing") {
  CollectionStore store;
  const auto& get = grammar().at("GET /groups/{id}");
  store.record_request_outcome(get, show_params("false"), ResponseClass::Reject4xx, 1);
  store.record_request_outcome(get, show_params("false"), ResponseClass::Transport, 2);
  CHECK(store.pairs().empty());
  CHECK(store.training_corpus(0).empty());
}

TEST_CASE("5xx with two non-default params gives two observations") {
  CollectionStore store;
  const auto& put = grammar().at("PUT /groups/{id}");
  auto rendered = std::map<std::string, std::string>{{"id", "3"}};
  for (const auto& p : put.params)
    if (!p.consumes) rendered[p.name] = p.default_value;
  rendered["visibility"] = "public";
  rendered["lfs_enabled"] = "true";
  store.record_request_outcome(put, rendered, ResponseClass::Error5xx, 4);
  REQUIRE(store.pairs().size() == 2);
  for (const auto& o : store.pairs()) CHECK(o.response_class == ResponseClass::Error5xx);
  CHECK(store.training_corpus(0).empty());
}

TEST_CASE("repeated observation increments hit count") {
  CollectionStore store;
  const auto& get = grammar().at("GET /groups/{id}");
  store.record_request_outcome(get, show_params("false"), ResponseClass::Pass2xx, 1);
  store.record_request_outcome(get, show_params("false"), ResponseClass::Pass2xx, 2);
  REQUIRE(store.pairs().size() == 1);
  CHECK(store.pairs()[0].hits == 2);
  CHECK(store.pairs()[0].observed_at == 1);
}

TEST_CASE("admit_sequence") {
  CollectionStore store;
  std::vector<ExecutedStep> ok{{"POST /groups", ResponseClass::Pass2xx, {}},
                               {"GET /groups/{id}", ResponseClass::Pass2xx, {0}}};
  CHECK(store.admit_sequence(ok, 2, 1));
  REQUIRE(store.seeds().size() == 1);
  CHECK(store.seeds()[0].length == 2);

  auto rejected = ok;
  rejected[1].response_class = ResponseClass::Reject4xx;
  CHECK_FALSE(store.admit_sequence(rejected, 2, 2));

  CHECK(store.admit_sequence(ok, 2, 3));
  CHECK(store.seeds().size() == 1);

  SUBCASE("5xx last step still passes checking") {
    auto err = ok;
    err[1].response_class = ResponseClass::Error5xx;
    err[1].template_id = "GET /groups/{id}/attributes";
    CHECK(store.admit_sequence(err, 2, 4));
    CHECK(store.seeds().size() == 2);
  }
  SUBCASE("consumer of a 5xx producer is not replayable") {
    std::vector<ExecutedStep> bad{{"POST /groups", ResponseClass::Error5xx, {}},
                                  {"GET /groups/{id}", ResponseClass::Pass2xx, {0}}};
    CHECK_FALSE(store.admit_sequence(bad, 2, 5));
  }
  SUBCASE("length mismatch (aborted execution)") { CHECK_FALSE(store.admit_sequence({ok[0]}, 2, 6)); }
}

TEST_CASE("training corpus") {
  CollectionStore store;
  const auto& get = grammar().at("GET /groups/{id}");
  store.record_request_outcome(get, show_params("false"), ResponseClass::Pass2xx, 1);
  const auto corpus = store.training_corpus(0);
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0] == PairList{"GET /groups/{id}", {{"with_projects", "false"}}});
  CHECK(store.training_corpus(1).empty());

  SUBCASE("pair order follows template parameter order") {
    store.record_request_outcome(get, {{"id", "1"}, {"with_projects", "3"}, {"with_custom_attributes", "true"}},
                                 ResponseClass::Pass2xx, 2);
    const auto c = store.training_corpus(1);
    REQUIRE(c.size() == 1);
    CHECK(c[0].pairs == std::vector<ParamValuePair>{{"with_custom_attributes", "true"}, {"with_projects", "3"}});
  }
  SUBCASE("earlier cut-off is a superset") {
    for (std::uint64_t t = 2; t < 8; ++t)
      store.record_request_outcome(get, show_params(t % 2 ? "3" : "false"), ResponseClass::Pass2xx, t);
    for (std::uint64_t s1 = 0; s1 < 8; ++s1)
      for (std::uint64_t s2 = s1; s2 < 8; ++s2) {
        const auto big = store.training_corpus(s1);
        const auto small = store.training_corpus(s2);
        CHECK(big.size() >= small.size());
        // suffix property: entries after s2 are the tail of entries after s1
        CHECK(std::equal(small.rbegin(), small.rend(), big.rbegin()));
      }
  }
}

TEST_CASE("undefined pairs") {
  CollectionStore store;
  const auto& list = grammar().at("GET /groups");
  std::map<std::string, std::string> rendered;
  for (const auto& p : list.params) rendered[p.name] = p.default_value;
  rendered["min_access_level"] = "1";
  store.record_request_outcome(list, rendered, ResponseClass::Pass2xx, 1);

  const auto got = store.undefined_pairs_for(grammar().at("GET /groups/{id}"));
  CHECK(got == std::vector<ParamValuePair>{{"min_access_level", "1"}});
  CHECK(store.undefined_pairs_for(list).empty());

  SUBCASE("4xx pairs never stored") {
    rendered["min_access_level"] = "abc";
    store.record_request_outcome(list, rendered, ResponseClass::Reject4xx, 2);
    CHECK(store.undefined_pairs_for(grammar().at("GET /groups/{id}")).size() == 1);
  }
  SUBCASE("5xx pairs included, deduplicated by pair") {
    store.record_request_outcome(list, rendered, ResponseClass::Error5xx, 3);
    rendered["per_page"] = "0";
    store.record_request_outcome(list, rendered, ResponseClass::Error5xx, 4);
    CHECK(store.undefined_pairs_for(grammar().at("GET /groups/{id}")) ==
          std::vector<ParamValuePair>{{"min_access_level", "1"}, {"per_page", "0"}});
  }
}

TEST_CASE("journal lines") {
  std::ostringstream out;
  CollectionStore store;
  store.set_journal(&out);
  store.record_request_outcome(grammar().at("GET /groups/{id}"), show_params("false"), ResponseClass::Pass2xx, 1);
  store.admit_sequence({{"POST /groups", ResponseClass::Pass2xx, {}}}, 1, 1);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> kinds;
  while (std::getline(in, line)) kinds.push_back(nlohmann::json::parse(line).at("kind"));
  CHECK(kinds == std::vector<std::string>{"pair", "seed"});
}
