#include "restfuzz/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace restfuzz {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& msg) {
  throw SpecError(SpecError::Kind::MalformedSpec, "malformed spec: " + msg);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Dictionary entries may be written as JSON strings, numbers or booleans;
// they are always carried as the literal wire text.
std::string scalar_text(const json& value, const std::string& where) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  if (value.is_number()) return value.dump();
  malformed(where + ": dictionary values must be scalars");
}

ParamLocation parse_location(const std::string& text, const std::string& where) {
  if (text == "path") return ParamLocation::Path;
  if (text == "query") return ParamLocation::Query;
  if (text == "body" || text == "formData") return ParamLocation::Body;
  malformed(where + ": unsupported location '" + text + "'");
}

ValueType parse_value_type(const json& param, const std::string& where) {
  const auto type = param.value("type", std::string("string"));
  const auto format = param.value("format", std::string());
  if (type == "integer" || type == "number") return ValueType::Integer;
  if (type == "boolean") return ValueType::Boolean;
  if (type == "datetime" || (type == "string" && format == "date-time"))
    return ValueType::DateTime;
  if (type == "string") return ValueType::String;
  malformed(where + ": unsupported type '" + type + "'");
}

ParamSpec parse_param(const json& p, const std::string& where) {
  if (!p.is_object()) malformed(where + ": parameter must be an object");
  if (!p.contains("name") || !p["name"].is_string()) malformed(where + ": parameter without name");
  ParamSpec spec;
  spec.name = p["name"].get<std::string>();
  const auto here = where + " param '" + spec.name + "'";
  if (!p.contains("in") || !p["in"].is_string()) malformed(here + ": missing 'in'");
  spec.location = parse_location(p["in"].get<std::string>(), here);
  spec.value_type = parse_value_type(p, here);
  spec.required = p.value("required", false);
  if (spec.location == ParamLocation::Path) {
    if (p.contains("required") && !spec.required)
      malformed(here + ": path parameters are always required");
    spec.required = true;
  }
  if (p.contains("x-consumes")) {
    if (!p["x-consumes"].is_string()) malformed(here + ": x-consumes must be a string");
    spec.consumes = p["x-consumes"].get<std::string>();
    return spec;
  }
  if (!p.contains("x-dictionary") || !p["x-dictionary"].is_array() || p["x-dictionary"].empty())
    malformed(here + ": x-dictionary must be a non-empty array");
  for (const auto& v : p["x-dictionary"]) spec.dictionary.push_back(scalar_text(v, here));
  spec.default_value =
      p.contains("x-default") ? scalar_text(p["x-default"], here) : spec.dictionary.front();
  if (std::find(spec.dictionary.begin(), spec.dictionary.end(), spec.default_value) ==
      spec.dictionary.end())
    throw SpecError(SpecError::Kind::DefaultNotInDictionary,
                    here + ": default '" + spec.default_value + "' not in dictionary");
  return spec;
}

RequestTemplate parse_operation(const std::string& path, const std::string& method_text,
                                const json& op) {
  RequestTemplate t;
  t.method = parse_method(method_text);
  t.path = path;
  t.id = make_template_id(t.method, path);
  if (!op.is_object()) malformed(t.id + ": operation must be an object");

  if (op.contains("parameters")) {
    if (!op["parameters"].is_array()) malformed(t.id + ": parameters must be an array");
    for (const auto& p : op["parameters"]) {
      auto spec = parse_param(p, t.id);
      if (t.defines(spec.name)) malformed(t.id + ": duplicate parameter '" + spec.name + "'");
      t.params.push_back(std::move(spec));
    }
  }

  const auto placeholders = path_placeholders(path);
  for (const auto& name : placeholders) {
    const auto* p = t.find_param(name);
    if (p == nullptr || p->location != ParamLocation::Path)
      malformed(t.id + ": placeholder {" + name + "} has no path parameter");
    if (std::count(placeholders.begin(), placeholders.end(), name) != 1)
      malformed(t.id + ": placeholder {" + name + "} repeated");
  }
  for (const auto& p : t.params) {
    if (p.location == ParamLocation::Path &&
        std::find(placeholders.begin(), placeholders.end(), p.name) == placeholders.end())
      malformed(t.id + ": path parameter '" + p.name + "' missing from path");
  }

  if (op.contains("x-produces")) {
    const auto& pr = op["x-produces"];
    if (!pr.is_object() || !pr.contains("type") || !pr["type"].is_string())
      malformed(t.id + ": x-produces needs a 'type'");
    ProducesSpec produces{pr["type"].get<std::string>(), pr.value("pointer", std::string("/id"))};
    if (produces.pointer.empty() || produces.pointer.front() != '/')
      malformed(t.id + ": x-produces pointer must start with '/'");
    t.produces = std::move(produces);
  }
  return t;
}

}  // namespace

std::string_view to_string(ParamLocation loc) {
  switch (loc) {
    case ParamLocation::Path: return "path";
    case ParamLocation::Query: return "query";
    case ParamLocation::Body: return "body";
  }
  return "query";
}

std::string_view to_string(ValueType type) {
  switch (type) {
    case ValueType::String: return "string";
    case ValueType::Integer: return "integer";
    case ValueType::Boolean: return "boolean";
    case ValueType::DateTime: return "datetime";
  }
  return "string";
}

std::string_view to_string(HttpMethod method) {
  switch (method) {
    case HttpMethod::Get: return "GET";
    case HttpMethod::Post: return "POST";
    case HttpMethod::Put: return "PUT";
    case HttpMethod::Delete: return "DELETE";
  }
  return "GET";
}

HttpMethod parse_method(std::string_view text) {
  const auto m = lower(text);
  if (m == "get") return HttpMethod::Get;
  if (m == "post") return HttpMethod::Post;
  if (m == "put") return HttpMethod::Put;
  if (m == "delete") return HttpMethod::Delete;
  malformed("unsupported method '" + std::string(text) + "'");
}

std::string make_template_id(HttpMethod method, std::string_view path) {
  return std::string(to_string(method)) + " " + std::string(path);
}

std::vector<std::string> path_placeholders(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = path.find('{', pos)) != std::string_view::npos) {
    const auto end = path.find('}', pos);
    if (end == std::string_view::npos) malformed("unterminated placeholder in '" + std::string(path) + "'");
    out.emplace_back(path.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

const ParamSpec* RequestTemplate::find_param(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<std::string> RequestTemplate::consumed_types() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (p.consumes) out.push_back(*p.consumes);
  return out;
}

const RequestTemplate& CompiledGrammar::at(const std::string& id) const {
  const auto it = templates.find(id);
  if (it == templates.end()) throw std::out_of_range("unknown request template '" + id + "'");
  return it->second;
}

CompiledGrammar parse_spec(const json& doc) {
  if (!doc.is_object()) malformed("top level must be an object");
  CompiledGrammar g;
  if (!doc.contains("paths")) return g;
  const auto& paths = doc["paths"];
  if (!paths.is_object()) malformed("'paths' must be an object");

  for (const auto& [path, ops] : paths.items()) {
    if (path.empty() || path.front() != '/') malformed("path '" + path + "' must start with '/'");
    if (!ops.is_object()) malformed("path '" + path + "' must map methods to operations");
    for (const auto& [method, op] : ops.items()) {
      auto t = parse_operation(path, method, op);
      if (g.templates.count(t.id)) malformed("duplicate operation " + t.id);
      g.templates.emplace(t.id, std::move(t));
    }
  }

  for (const auto& [id, t] : g.templates)
    if (t.produces) g.resource_types.insert(t.produces->resource_type);

  for (const auto& [cid, consumer] : g.templates) {
    for (const auto& p : consumer.params) {
      if (!p.consumes) continue;
      if (!g.resource_types.count(*p.consumes))
        throw SpecError(SpecError::Kind::UnresolvableConsumer,
                        cid + " param '" + p.name + "' consumes '" + *p.consumes +
                            "' which no template produces");
      for (const auto& [pid, producer] : g.templates)
        if (producer.produces && producer.produces->resource_type == *p.consumes)
          g.dependency_edges.insert({pid, *p.consumes, cid});
    }
  }
  return g;
}

CompiledGrammar parse_spec(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  return parse_spec(doc);
}

CompiledGrammar load_spec_file(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open spec file '" + file + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(std::string_view(buf.str()));
}

json serialize_grammar(const CompiledGrammar& grammar) {
  json paths = json::object();
  for (const auto& [id, t] : grammar.templates) {
    json op = json::object();
    json params = json::array();
    for (const auto& p : t.params) {
      json jp = {{"name", p.name},
                 {"in", std::string(to_string(p.location))},
                 {"type", std::string(to_string(p.value_type))},
                 {"required", p.required}};
      if (p.consumes) {
        jp["x-consumes"] = *p.consumes;
      } else {
        jp["x-dictionary"] = p.dictionary;
        jp["x-default"] = p.default_value;
      }
      params.push_back(std::move(jp));
    }
    op["parameters"] = std::move(params);
    if (t.produces) op["x-produces"] = {{"type", t.produces->resource_type}, {"pointer", t.produces->pointer}};
    paths[t.path][lower(to_string(t.method))] = std::move(op);
  }
  return json{{"paths", std::move(paths)}};
}

std::vector<std::string> satisfiable_templates(const CompiledGrammar& grammar,
                                               const std::set<std::string>& available) {
  std::vector<std::string> out;
  for (const auto& [id, t] : grammar.templates) {
    const auto needs = t.consumed_types();
    if (std::all_of(needs.begin(), needs.end(),
                    [&](const std::string& type) { return available.count(type) != 0; }))
      out.push_back(id);
  }
  return out;
}

}  // namespace restfuzz
