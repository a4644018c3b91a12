#pragma once

// In-memory composer sessions over an immutable model, and the HTTP shell
// around them.
//
//   GET  /model
//   POST /session
//   GET  /session/{id}
//   POST /session/{id}/seed           {"abc": "..."}
//   POST /session/{id}/continuations  {"n", "length", "temperature", "rng_seed"?}
//   POST /session/{id}/accept         {"continuation_id", "prefix_len"}
//   GET  /session/{id}/export

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "folkgen/abc.hpp"
#include "folkgen/model.hpp"

namespace httplib {
class Server;
}

namespace folkgen::service {

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct OfferedContinuation {
  int id = 0;
  std::size_t base_len = 0;  // accepted length when offered
  EncodedSong notes;         // generated tokens only
  std::vector<double> probs;
  bool ended = false;
  std::optional<std::size_t> accepted_prefix;
};

struct SessionRecord {
  std::string id;
  bool seeded = false;
  EncodedSong melody;  // accepted tokens, never containing the song ending
  Rational base{1};
  int shift = 0;
  abc::KeySignature key;
  std::optional<abc::Meter> meter;
  std::vector<OfferedContinuation> history;
  int next_continuation = 1;
  std::chrono::steady_clock::time_point last_used;
};

using Clock = std::function<std::chrono::steady_clock::time_point()>;

class Service {
 public:
  Service(MelodyModel model, std::uint64_t server_seed, std::chrono::seconds ttl = std::chrono::hours(1),
          Clock clock = {});

  Response get_model() const;
  Response create_session();
  Response get_session(const std::string& id);
  Response set_seed(const std::string& id, const std::string& body);
  Response continuations(const std::string& id, const std::string& body);
  Response accept(const std::string& id, const std::string& body);
  Response export_abc(const std::string& id);

  /// Drops sessions idle for longer than the TTL; returns how many.
  std::size_t evict_expired();
  std::size_t session_count() const;

  const MelodyModel& model() const { return model_; }

 private:
  std::chrono::steady_clock::time_point now() const;
  std::uint64_t next_server_seed();

  const MelodyModel model_;
  const std::chrono::seconds ttl_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, SessionRecord> sessions_;
  std::mt19937_64 master_rng_;
  std::uint64_t id_counter_ = 0;
};

/// Routes, CORS headers and error mapping on top of a Service.
class HttpServer {
 public:
  HttpServer(Service& service, std::string cors_origin = "*");
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds an ephemeral port and returns it, or -1.
  int bind_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  std::unique_ptr<httplib::Server> server_;
};

/// Port from FOLKGEN_PORT when set and valid, else `fallback`.
int resolve_port(int fallback);

}  // namespace folkgen::service
