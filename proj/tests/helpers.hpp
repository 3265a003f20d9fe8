#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "restfuzz/grammar.hpp"

namespace testutil {

inline std::string data_file(const std::string& name) { return std::string(RESTFUZZ_DATA_DIR) + "/" + name; }

inline nlohmann::json get_group_op() {
  return nlohmann::json::parse(R"({
    "parameters": [
      {"name": "id", "in": "path", "type": "integer", "required": true, "x-consumes": "group"},
      {"name": "with_custom_attributes", "in": "query", "type": "boolean",
       "x-dictionary": ["true", "false"], "x-default": "false"},
      {"name": "with_projects", "in": "query", "type": "boolean",
       "x-dictionary": ["3", "true", "false"], "x-default": "true"}
    ]})");
}

inline nlohmann::json post_group_op() {
  return nlohmann::json::parse(R"({
    "parameters": [
      {"name": "name", "in": "body", "type": "string", "required": true,
       "x-dictionary": ["grp", ""], "x-default": "grp"}
    ],
    "x-produces": {"type": "group", "pointer": "/id"}})");
}

// POST /groups + GET /groups/{id}.
inline nlohmann::json two_template_spec() {
  nlohmann::json doc;
  doc["paths"]["/groups"]["post"] = post_group_op();
  doc["paths"]["/groups/{id}"]["get"] = get_group_op();
  return doc;
}

inline restfuzz::CompiledGrammar mock_grammar() { return restfuzz::load_spec_file(data_file("mock_target.grammar.json")); }

}  // namespace testutil
