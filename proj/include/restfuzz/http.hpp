#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "restfuzz/grammar.hpp"

namespace restfuzz {

enum class ResponseClass { Pass2xx, Reject4xx, Error5xx, Transport };

std::string_view to_string(ResponseClass cls);
ResponseClass parse_response_class(std::string_view text);

// 2xx -> Pass2xx, 4xx -> Reject4xx, 5xx -> Error5xx. Anything else (including
// status 0 for connect/read failures) is reported as Transport.
ResponseClass classify_status(int status);

inline bool passes_checking(ResponseClass cls) {
  return cls == ResponseClass::Pass2xx || cls == ResponseClass::Error5xx;
}

// Where a consumer parameter took its object id from: the position of the
// producing request within the executed sequence.
struct IdBinding {
  std::size_t step = 0;
  ParamLocation location = ParamLocation::Path;

  bool operator==(const IdBinding&) const = default;
};

struct ReadyRequest {
  std::string template_id;
  HttpMethod method = HttpMethod::Get;
  std::string path_template;
  std::map<std::string, std::string> path_params;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> body;
  std::map<std::string, std::string> headers;
  std::map<std::string, IdBinding> bindings;
  std::optional<std::string> produces_pointer;

  // Path with every placeholder substituted.
  std::string path() const;
  bool operator==(const ReadyRequest&) const = default;
};

struct ResponseRecord {
  int status = 0;
  ResponseClass cls = ResponseClass::Transport;
  std::string body;
  std::chrono::microseconds latency{0};
};

// Serialization used by replay files. Headers named in `redact` are dropped.
nlohmann::json to_json(const ReadyRequest& request, bool redact_auth = true);
ReadyRequest ready_request_from_json(const nlohmann::json& j);

// Reads a value at a JSON pointer and renders it as the literal wire text.
std::optional<std::string> read_pointer(std::string_view body, const std::string& pointer);

class Client {
 public:
  virtual ~Client() = default;
  virtual ResponseRecord send(const ReadyRequest& request) = 0;
  // True when the target accepts connections.
  virtual bool reachable() = 0;
};

// HTTP/1.1 client with a persistent connection to `base_url`.
std::unique_ptr<Client> make_http_client(const std::string& base_url);

}  // namespace restfuzz
