#include "restfuzz/http.hpp"

#include <httplib.h>

namespace restfuzz {

using nlohmann::json;

std::string_view to_string(ResponseClass cls) {
  switch (cls) {
    case ResponseClass::Pass2xx: return "2xx";
    case ResponseClass::Reject4xx: return "4xx";
    case ResponseClass::Error5xx: return "5xx";
    case ResponseClass::Transport: return "transport";
  }
  return "transport";
}

ResponseClass parse_response_class(std::string_view text) {
  if (text == "2xx") return ResponseClass::Pass2xx;
  if (text == "4xx") return ResponseClass::Reject4xx;
  if (text == "5xx") return ResponseClass::Error5xx;
  if (text == "transport") return ResponseClass::Transport;
  throw std::invalid_argument("unknown response class '" + std::string(text) + "'");
}

ResponseClass classify_status(int status) {
  if (status >= 200 && status < 300) return ResponseClass::Pass2xx;
  if (status >= 400 && status < 500) return ResponseClass::Reject4xx;
  if (status >= 500 && status < 600) return ResponseClass::Error5xx;
  return ResponseClass::Transport;
}

std::string ReadyRequest::path() const {
  std::string out;
  out.reserve(path_template.size() + 8);
  std::size_t i = 0;
  while (i < path_template.size()) {
    if (path_template[i] == '{') {
      const auto end = path_template.find('}', i);
      const auto name = path_template.substr(i + 1, end - i - 1);
      const auto it = path_params.find(name);
      out += it != path_params.end() ? it->second : path_template.substr(i, end - i + 1);
      i = end + 1;
    } else {
      out += path_template[i++];
    }
  }
  return out;
}

json to_json(const ReadyRequest& r, bool redact_auth) {
  json headers = json::object();
  for (const auto& [k, v] : r.headers)
    if (!(redact_auth && k == "Authorization")) headers[k] = v;
  json bindings = json::object();
  for (const auto& [param, b] : r.bindings)
    bindings[param] = {{"step", b.step}, {"in", std::string(to_string(b.location))}};
  json j = {{"template", r.template_id},
            {"method", std::string(to_string(r.method))},
            {"path", r.path()},
            {"path_template", r.path_template},
            {"path_params", r.path_params},
            {"query", r.query},
            {"body", r.body},
            {"headers", headers},
            {"bindings", bindings}};
  if (r.produces_pointer) j["produces_pointer"] = *r.produces_pointer;
  return j;
}

ReadyRequest ready_request_from_json(const json& j) {
  ReadyRequest r;
  r.template_id = j.at("template").get<std::string>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.path_template = j.at("path_template").get<std::string>();
  r.path_params = j.value("path_params", std::map<std::string, std::string>{});
  r.query = j.value("query", std::map<std::string, std::string>{});
  r.body = j.value("body", std::map<std::string, std::string>{});
  r.headers = j.value("headers", std::map<std::string, std::string>{});
  if (j.contains("bindings")) {
    for (const auto& [param, b] : j["bindings"].items()) {
      const auto loc = b.at("in").get<std::string>();
      r.bindings[param] = {b.at("step").get<std::size_t>(),
                           loc == "path" ? ParamLocation::Path
                           : loc == "body" ? ParamLocation::Body
                                           : ParamLocation::Query};
    }
  }
  if (j.contains("produces_pointer")) r.produces_pointer = j["produces_pointer"].get<std::string>();
  return r;
}

std::optional<std::string> read_pointer(std::string_view body, const std::string& pointer) {
  const auto doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded()) return std::nullopt;
  try {
    const auto& v = doc.at(json::json_pointer(pointer));
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number() || v.is_boolean()) return v.dump();
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

namespace {

class HttpClient final : public Client {
 public:
  explicit HttpClient(const std::string& base_url) : client_(base_url) {
    client_.set_keep_alive(true);
    client_.set_tcp_nodelay(true);
    client_.set_connection_timeout(std::chrono::seconds(5));
    client_.set_read_timeout(std::chrono::seconds(30));
  }

  ResponseRecord send(const ReadyRequest& request) override {
    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    httplib::Params params;
    for (const auto& [k, v] : request.query) params.emplace(k, v);
    const auto target = httplib::append_query_params(request.path(), params);

    std::string body;
    if (!request.body.empty()) body = json(request.body).dump();

    const auto start = std::chrono::steady_clock::now();
    httplib::Result res = [&] {
      switch (request.method) {
        case HttpMethod::Get: return client_.Get(target, headers);
        case HttpMethod::Post: return client_.Post(target, headers, body, "application/json");
        case HttpMethod::Put: return client_.Put(target, headers, body, "application/json");
        case HttpMethod::Delete:
          return body.empty() ? client_.Delete(target, headers)
                              : client_.Delete(target, headers, body, "application/json");
      }
      return client_.Get(target, headers);
    }();

    ResponseRecord out;
    out.latency = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - start);
    if (!res) return out;
    out.status = res->status;
    out.cls = classify_status(res->status);
    out.body = res->body;
    return out;
  }

  bool reachable() override {
    auto res = client_.Get("/");
    return static_cast<bool>(res);
  }

 private:
  httplib::Client client_;
};

}  // namespace

std::unique_ptr<Client> make_http_client(const std::string& base_url) {
  return std::make_unique<HttpClient>(base_url);
}

}  // namespace restfuzz
