#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

namespace restfuzz {

enum class ParamLocation { Path, Query, Body };
enum class ValueType { String, Integer, Boolean, DateTime };
enum class HttpMethod { Get, Post, Put, Delete };

std::string_view to_string(ParamLocation loc);
std::string_view to_string(ValueType type);
std::string_view to_string(HttpMethod method);
HttpMethod parse_method(std::string_view text);

struct ParamSpec {
  std::string name;
  ParamLocation location = ParamLocation::Query;
  ValueType value_type = ValueType::String;
  bool required = false;
  // Candidate literal values; ignored when `consumes` is set.
  std::vector<std::string> dictionary;
  std::string default_value;
  // Resource type whose produced id fills this parameter.
  std::optional<std::string> consumes;

  bool is_consumer() const { return consumes.has_value(); }
  bool operator==(const ParamSpec&) const = default;
};

struct ProducesSpec {
  std::string resource_type;
  std::string pointer;  // JSON pointer into a 2xx response body, e.g. "/id"

  bool operator==(const ProducesSpec&) const = default;
};

struct RequestTemplate {
  std::string id;  // "<METHOD> <path>"
  HttpMethod method = HttpMethod::Get;
  std::string path;
  std::vector<ParamSpec> params;
  std::optional<ProducesSpec> produces;

  const ParamSpec* find_param(std::string_view name) const;
  bool defines(std::string_view name) const { return find_param(name) != nullptr; }
  // Resource types named by the consumer parameters, in parameter order.
  std::vector<std::string> consumed_types() const;

  bool operator==(const RequestTemplate&) const = default;
};

struct DependencyEdge {
  std::string producer;
  std::string resource_type;
  std::string consumer;

  auto operator<=>(const DependencyEdge&) const = default;
};

// Immutable after construction; safe for concurrent readers.
struct CompiledGrammar {
  std::map<std::string, RequestTemplate> templates;
  std::set<std::string> resource_types;
  std::set<DependencyEdge> dependency_edges;

  const RequestTemplate& at(const std::string& id) const;
  bool contains(const std::string& id) const { return templates.count(id) != 0; }

  bool operator==(const CompiledGrammar&) const = default;
};

class SpecError : public std::runtime_error {
 public:
  enum class Kind { MalformedSpec, UnresolvableConsumer, DefaultNotInDictionary };

  SpecError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string make_template_id(HttpMethod method, std::string_view path);

// Placeholder names of a path such as "/groups/{id}/attributes", in order.
std::vector<std::string> path_placeholders(std::string_view path);

CompiledGrammar parse_spec(std::string_view document);
CompiledGrammar parse_spec(const nlohmann::json& document);
CompiledGrammar load_spec_file(const std::string& file);

nlohmann::json serialize_grammar(const CompiledGrammar& grammar);

// Templates whose every consumer parameter names a type in `available`.
std::vector<std::string> satisfiable_templates(const CompiledGrammar& grammar,
                                               const std::set<std::string>& available);

}  // namespace restfuzz
