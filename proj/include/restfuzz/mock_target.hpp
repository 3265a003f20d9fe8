#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <thread>

#include <nlohmann/json.hpp>

#include "restfuzz/http.hpp"

namespace httplib {
class Server;
}

namespace restfuzz::mock {

enum class Bug { UseAfterFree, UndefinedParam, PerPageZero, ParentId };

std::string_view to_string(Bug bug);
Bug parse_bug(std::string_view text);  // "b-uaf", "b-undef", "b-perpage", "b-parentid"
std::set<Bug> parse_bug_list(std::string_view csv);

struct BugConfig {
  std::set<Bug> armed;
  std::uint64_t seed = 0;

  bool is_armed(Bug bug) const { return armed.count(bug) != 0; }
  static BugConfig all(std::uint64_t seed = 0);
};

struct MockResponse {
  int status = 200;
  std::string body;
};

// In-memory projects/groups service. Not thread-safe; `MockServer` serializes
// access. Handling is a pure function of the request stream since the last reset.
class MockTarget {
 public:
  explicit MockTarget(BugConfig bugs = {});

  MockResponse handle(std::string_view method, std::string_view path,
                      const std::map<std::string, std::string>& query, std::string_view body);

  void reset();
  const BugConfig& bugs() const { return bugs_; }

  // Branch name -> hit count, every known branch listed.
  const std::map<std::string, std::uint64_t>& coverage() const { return coverage_; }
  std::size_t branches_hit() const;

 private:
  struct Resource {
    std::map<std::string, std::string> fields;
  };
  struct Collection {
    std::map<long long, Resource> live;
    std::set<long long> tombstones;
    long long next_id = 1;
  };
  using Params = std::map<std::string, std::string>;

  MockResponse route(std::string_view method, std::string_view path, const Params& query,
                     const Params& body);
  MockResponse create(const std::string& type, const Params& body);
  MockResponse list(const std::string& type, const Params& query);
  MockResponse show(const std::string& type, const std::string& id, const Params& query);
  MockResponse attributes(const std::string& type, const std::string& id);
  MockResponse update(const std::string& type, const std::string& id, const Params& query,
                      const Params& body);
  MockResponse remove(const std::string& type, const std::string& id);

  void hit(const std::string& branch);
  Resource* find_live(const std::string& type, const std::string& id);
  bool is_tombstoned(const std::string& type, const std::string& id) const;
  std::string timestamp(long long id) const;

  BugConfig bugs_;
  std::map<std::string, Collection> collections_;
  std::map<std::string, std::uint64_t> coverage_;
};

// Client adapter that calls a MockTarget directly, bypassing sockets.
std::unique_ptr<Client> make_in_process_client(MockTarget& target);

// HTTP front end. Requests are handled one at a time.
class MockServer {
 public:
  explicit MockServer(BugConfig bugs);
  ~MockServer();

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds and starts serving on a background thread. Port 0 picks a free port.
  // Throws std::runtime_error (BindFailed) when the port cannot be bound.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks serving on the calling thread.
  void listen_blocking(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string base_url() const;

  MockTarget& target() { return target_; }
  std::mutex& mutex() { return mutex_; }

 private:
  void install_routes();

  MockTarget target_;
  std::mutex mutex_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
};

}  // namespace restfuzz::mock
