#include "restfuzz/mock_target.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include <httplib.h>

namespace restfuzz::mock {

using nlohmann::json;

namespace {

enum class Check { Any, NonEmpty, Bool, Int, NonNegInt, Visibility, OrderBy, DateTime };

struct Rule {
  const char* name;
  Check check;
  bool required = false;
};

const std::vector<Rule>& rules_for(const std::string& key) {
  static const std::map<std::string, std::vector<Rule>> table = {
      {"groups.create",
       {{"name", Check::NonEmpty, true},
        {"visibility", Check::Visibility},
        {"parent_id", Check::Int},
        {"description", Check::Any},
        {"request_access_enabled", Check::Bool}}},
      {"groups.list",
       {{"per_page", Check::Int},
        {"statistics", Check::Bool},
        {"order_by", Check::OrderBy},
        {"min_access_level", Check::NonNegInt},
        {"created_after", Check::DateTime}}},
      {"groups.show", {{"with_custom_attributes", Check::Bool}, {"with_projects", Check::Bool}}},
      {"groups.update",
       {{"name", Check::NonEmpty},
        {"description", Check::Any},
        {"visibility", Check::Visibility},
        {"lfs_enabled", Check::Bool}}},
      {"projects.create",
       {{"name", Check::NonEmpty, true},
        {"visibility", Check::Visibility},
        {"namespace_id", Check::Int, true},
        {"initialize_with_readme", Check::Bool}}},
      {"projects.list",
       {{"per_page", Check::Int}, {"order_by", Check::OrderBy}, {"created_after", Check::DateTime}}},
      {"projects.show", {{"with_custom_attributes", Check::Bool}}},
      {"projects.update",
       {{"name", Check::NonEmpty}, {"description", Check::Any}, {"visibility", Check::Visibility}}},
  };
  static const std::vector<Rule> none;
  const auto it = table.find(key);
  return it == table.end() ? none : it->second;
}

std::vector<std::string> all_branches() {
  std::vector<std::string> out;
  for (const std::string type : {"groups", "projects"}) {
    for (const std::string op : {"create", "list", "show", "update"}) {
      const auto key = type + "." + op;
      out.push_back(key + ".ok");
      for (const auto& r : rules_for(key)) {
        out.push_back(key + ".invalid_" + r.name);
        if (r.required) out.push_back(key + ".missing_" + r.name);
      }
    }
    for (const std::string op : {"show", "update", "delete", "attributes"}) {
      out.push_back(type + "." + op + ".not_found");
      out.push_back(type + "." + op + ".deleted");
    }
    out.push_back(type + ".attributes.ok");
    out.push_back(type + ".delete.ok");
    out.push_back(type + ".list.per_page_range");
  }
  out.push_back("groups.create.parent_id_range");
  out.push_back("projects.create.namespace_missing");
  out.push_back("groups.create.bug_parent_id");
  out.push_back("groups.list.bug_per_page");
  out.push_back("groups.attributes.bug_uaf");
  out.push_back("groups.update.bug_undefined_param");
  out.push_back("router.unknown_path");
  out.push_back("router.bad_method");
  out.push_back("router.bad_body");
  return out;
}

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool valid_datetime(const std::string& s) {
  // YYYY-MM-DDTHH:MM:SSZ
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
      s[16] != ':' || s[19] != 'Z')
    return false;
  for (int i : {0, 1, 2, 3, 5, 6, 8, 9, 11, 12, 14, 15, 17, 18})
    if (s[i] < '0' || s[i] > '9') return false;
  const int month = std::stoi(s.substr(5, 2));
  const int day = std::stoi(s.substr(8, 2));
  const int hour = std::stoi(s.substr(11, 2));
  const int minute = std::stoi(s.substr(14, 2));
  const int second = std::stoi(s.substr(17, 2));
  return month >= 1 && month <= 12 && day >= 1 && day <= 31 && hour < 24 && minute < 60 &&
         second < 60;
}

bool passes(Check check, const std::string& v) {
  long long n = 0;
  switch (check) {
    case Check::Any: return true;
    case Check::NonEmpty: return !v.empty() && v.size() <= 64;
    case Check::Bool: return v == "true" || v == "false";
    case Check::Int: return parse_int(v, n);
    case Check::NonNegInt: return parse_int(v, n) && n >= 0;
    case Check::Visibility: return v == "private" || v == "internal" || v == "public";
    case Check::OrderBy: return v == "name" || v == "id" || v == "path";
    case Check::DateTime: return valid_datetime(v);
  }
  return false;
}

MockResponse message(int status, const std::string& text) {
  return {status, json{{"message", text}}.dump()};
}

MockResponse internal_error(const std::string& where) {
  return {500, json{{"message", "500 Internal Server Error"}, {"trace", where}}.dump()};
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const auto end = path.find('/', i);
    const auto stop = end == std::string_view::npos ? path.size() : end;
    if (stop > i) parts.emplace_back(path.substr(i, stop - i));
    i = stop;
  }
  return parts;
}

std::string singular(const std::string& type) { return type == "groups" ? "Group" : "Project"; }

}  // namespace

std::string_view to_string(Bug bug) {
  switch (bug) {
    case Bug::UseAfterFree: return "b-uaf";
    case Bug::UndefinedParam: return "b-undef";
    case Bug::PerPageZero: return "b-perpage";
    case Bug::ParentId: return "b-parentid";
  }
  return "";
}

Bug parse_bug(std::string_view text) {
  for (Bug b : {Bug::UseAfterFree, Bug::UndefinedParam, Bug::PerPageZero, Bug::ParentId})
    if (to_string(b) == text) return b;
  throw std::invalid_argument("unknown bug '" + std::string(text) + "'");
}

std::set<Bug> parse_bug_list(std::string_view csv) {
  std::set<Bug> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const auto item = csv.substr(pos, comma == std::string_view::npos ? csv.size() - pos : comma - pos);
    if (!item.empty()) out.insert(parse_bug(item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

BugConfig BugConfig::all(std::uint64_t seed) {
  return {{Bug::UseAfterFree, Bug::UndefinedParam, Bug::PerPageZero, Bug::ParentId}, seed};
}

MockTarget::MockTarget(BugConfig bugs) : bugs_(std::move(bugs)) { reset(); }

void MockTarget::reset() {
  collections_.clear();
  collections_["groups"];
  collections_["projects"];
  coverage_.clear();
  for (auto& b : all_branches()) coverage_[b] = 0;
}

std::size_t MockTarget::branches_hit() const {
  return static_cast<std::size_t>(
      std::count_if(coverage_.begin(), coverage_.end(), [](const auto& kv) { return kv.second > 0; }));
}

void MockTarget::hit(const std::string& branch) { ++coverage_[branch]; }

MockTarget::Resource* MockTarget::find_live(const std::string& type, const std::string& id) {
  long long n = 0;
  if (!parse_int(id, n)) return nullptr;
  auto& live = collections_[type].live;
  const auto it = live.find(n);
  return it == live.end() ? nullptr : &it->second;
}

bool MockTarget::is_tombstoned(const std::string& type, const std::string& id) const {
  long long n = 0;
  if (!parse_int(id, n)) return false;
  const auto it = collections_.find(type);
  return it != collections_.end() && it->second.tombstones.count(n) != 0;
}

std::string MockTarget::timestamp(long long id) const {
  // Deterministic creation clock: one minute per id, offset by the seed.
  const long long minutes = static_cast<long long>(bugs_.seed % 1440) + id;
  char buf[32];
  std::snprintf(buf, sizeof buf, "2024-01-%02lldT%02lld:%02lld:00Z", 1 + (minutes / 1440) % 28,
                (minutes / 60) % 24, minutes % 60);
  return buf;
}

MockResponse MockTarget::handle(std::string_view method, std::string_view path,
                                const Params& query, std::string_view body) {
  Params body_params;
  if (!body.empty()) {
    const auto doc = json::parse(body.begin(), body.end(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      hit("router.bad_body");
      return message(400, "400 Bad Request: body is not a JSON object");
    }
    for (const auto& [k, v] : doc.items())
      body_params[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return route(method, path, query, body_params);
}

MockResponse MockTarget::route(std::string_view method, std::string_view path, const Params& query,
                               const Params& body) {
  const auto parts = split_path(path);
  if (parts.empty() || parts.size() > 3 || (parts[0] != "groups" && parts[0] != "projects") ||
      (parts.size() == 3 && parts[2] != "attributes")) {
    hit("router.unknown_path");
    return message(404, "404 Not Found");
  }
  const auto& type = parts[0];
  auto bad_method = [&] {
    hit("router.bad_method");
    return message(405, "405 Method Not Allowed");
  };

  if (parts.size() == 1) {
    if (method == "POST") return create(type, body);
    if (method == "GET") return list(type, query);
    return bad_method();
  }
  const auto& id = parts[1];
  if (parts.size() == 3) {
    if (method == "GET") return attributes(type, id);
    return bad_method();
  }
  if (method == "GET") return show(type, id, query);
  if (method == "PUT") return update(type, id, query, body);
  if (method == "DELETE") return remove(type, id);
  return bad_method();
}

namespace {

// Returns the failing branch suffix, or empty when every rule passes.
std::string validate(const std::vector<Rule>& rules, const std::map<std::string, std::string>& in) {
  for (const auto& r : rules) {
    const auto it = in.find(r.name);
    if (it == in.end()) {
      if (r.required) return std::string("missing_") + r.name;
      continue;
    }
    if (!passes(r.check, it->second)) return std::string("invalid_") + r.name;
  }
  return {};
}

}  // namespace

MockResponse MockTarget::create(const std::string& type, const Params& body) {
  const auto key = type + ".create";
  if (auto failed = validate(rules_for(key), body); !failed.empty()) {
    hit(key + "." + failed);
    return message(400, "400 Bad Request: " + failed);
  }
  if (type == "groups") {
    long long parent = 0;
    if (const auto it = body.find("parent_id"); it != body.end()) {
      parse_int(it->second, parent);
      if (bugs_.is_armed(Bug::ParentId) && (parent == 2 || parent == -1 || parent == -2)) {
        hit("groups.create.bug_parent_id");
        return internal_error("Groups::CreateService#parent");
      }
      if (parent < 0) {
        hit("groups.create.parent_id_range");
        return message(400, "400 Bad Request: parent_id out of range");
      }
    }
  } else if (find_live("groups", body.at("namespace_id")) == nullptr) {
    hit("projects.create.namespace_missing");
    return message(404, "404 Namespace Not Found");
  }

  auto& coll = collections_[type];
  const long long id = coll.next_id++;
  Resource r;
  r.fields = body;
  r.fields["created_at"] = timestamp(id);
  coll.live.emplace(id, r);
  hit(key + ".ok");
  json out = r.fields;
  out["id"] = id;
  return {201, out.dump()};
}

MockResponse MockTarget::list(const std::string& type, const Params& query) {
  const auto key = type + ".list";
  if (auto failed = validate(rules_for(key), query); !failed.empty()) {
    hit(key + "." + failed);
    return message(400, "400 Bad Request: " + failed);
  }
  long long per_page = 20;
  if (const auto it = query.find("per_page"); it != query.end()) {
    parse_int(it->second, per_page);
    if (type == "groups" && per_page == 0 && bugs_.is_armed(Bug::PerPageZero)) {
      hit("groups.list.bug_per_page");
      return internal_error("Groups::Finder#paginate");
    }
    if (per_page < 1 || per_page > 100) {
      hit(key + ".per_page_range");
      return message(400, "400 Bad Request: per_page out of range");
    }
  }
  json items = json::array();
  for (const auto& [id, r] : collections_[type].live) {
    if (static_cast<long long>(items.size()) >= per_page) break;
    json item = r.fields;
    item["id"] = id;
    items.push_back(std::move(item));
  }
  hit(key + ".ok");
  return {200, items.dump()};
}

MockResponse MockTarget::show(const std::string& type, const std::string& id, const Params& query) {
  const auto key = type + ".show";
  auto* r = find_live(type, id);
  if (r == nullptr) {
    hit(key + (is_tombstoned(type, id) ? ".deleted" : ".not_found"));
    return message(404, "404 " + singular(type) + " Not Found");
  }
  if (auto failed = validate(rules_for(key), query); !failed.empty()) {
    hit(key + "." + failed);
    return message(400, "400 Bad Request: " + failed);
  }
  hit(key + ".ok");
  json out = r->fields;
  out["id"] = std::stoll(id);
  return {200, out.dump()};
}

MockResponse MockTarget::attributes(const std::string& type, const std::string& id) {
  const auto key = type + ".attributes";
  auto* r = find_live(type, id);
  if (r == nullptr) {
    if (is_tombstoned(type, id)) {
      if (type == "groups" && bugs_.is_armed(Bug::UseAfterFree)) {
        hit("groups.attributes.bug_uaf");
        return internal_error("Groups::CustomAttributes#show on destroyed record");
      }
      hit(key + ".deleted");
    } else {
      hit(key + ".not_found");
    }
    return message(404, "404 " + singular(type) + " Not Found");
  }
  hit(key + ".ok");
  return {200, json{{"custom_attributes", json::array()}}.dump()};
}

MockResponse MockTarget::update(const std::string& type, const std::string& id, const Params& query,
                                const Params& body) {
  const auto key = type + ".update";
  auto* r = find_live(type, id);
  if (r == nullptr) {
    hit(key + (is_tombstoned(type, id) ? ".deleted" : ".not_found"));
    return message(404, "404 " + singular(type) + " Not Found");
  }
  if (auto failed = validate(rules_for(key), body); !failed.empty()) {
    hit(key + "." + failed);
    return message(400, "400 Bad Request: " + failed);
  }
  if (type == "groups" && bugs_.is_armed(Bug::UndefinedParam) &&
      (body.count("initialize_with_readme") || query.count("initialize_with_readme"))) {
    hit("groups.update.bug_undefined_param");
    return internal_error("Groups::UpdateService#execute undefined attribute");
  }
  for (const auto& rule : rules_for(key))
    if (const auto it = body.find(rule.name); it != body.end()) r->fields[rule.name] = it->second;
  hit(key + ".ok");
  json out = r->fields;
  out["id"] = std::stoll(id);
  return {200, out.dump()};
}

MockResponse MockTarget::remove(const std::string& type, const std::string& id) {
  const auto key = type + ".delete";
  if (find_live(type, id) == nullptr) {
    hit(key + (is_tombstoned(type, id) ? ".deleted" : ".not_found"));
    return message(404, "404 " + singular(type) + " Not Found");
  }
  auto& coll = collections_[type];
  const long long n = std::stoll(id);
  coll.live.erase(n);
  coll.tombstones.insert(n);
  hit(key + ".ok");
  return {204, ""};
}

namespace {

class InProcessClient final : public Client {
 public:
  explicit InProcessClient(MockTarget& target) : target_(target) {}

  ResponseRecord send(const ReadyRequest& request) override {
    const std::string body = request.body.empty() ? std::string() : json(request.body).dump();
    const auto start = std::chrono::steady_clock::now();
    auto res = target_.handle(to_string(request.method), request.path(), request.query, body);
    ResponseRecord out;
    out.status = res.status;
    out.cls = classify_status(res.status);
    out.body = std::move(res.body);
    out.latency = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - start);
    return out;
  }

  bool reachable() override { return true; }

 private:
  MockTarget& target_;
};

}  // namespace

std::unique_ptr<Client> make_in_process_client(MockTarget& target) {
  return std::make_unique<InProcessClient>(target);
}

MockServer::MockServer(BugConfig bugs)
    : target_(std::move(bugs)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

MockServer::~MockServer() { stop(); }

void MockServer::install_routes() {
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    MockResponse out;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      out = target_.handle(req.method, req.path, query, req.body);
    }
    res.status = out.status;
    if (!out.body.empty()) res.set_content(out.body, "application/json");
  };

  server_->set_tcp_nodelay(true);
  server_->Post("/__reset", [this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mutex_);
    target_.reset();
    res.status = 204;
  });
  server_->Get("/__coverage", [this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mutex_);
    res.set_content(json(target_.coverage()).dump(), "application/json");
  });
  const std::string any = "/.*";
  server_->Get(any, dispatch);
  server_->Post(any, dispatch);
  server_->Put(any, dispatch);
  server_->Delete(any, dispatch);
  server_->Patch(any, dispatch);
}

int MockServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw std::runtime_error("BindFailed: cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::listen_blocking(const std::string& host, int port) {
  host_ = host;
  if (!server_->bind_to_port(host, port))
    throw std::runtime_error("BindFailed: cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
}

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace restfuzz::mock
