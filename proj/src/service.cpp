#include "folkgen/service.hpp"

#include <cstdio>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "folkgen/checkpoint.hpp"
#include "folkgen/generation.hpp"

namespace folkgen::service {

using nlohmann::json;

namespace {

constexpr int kMaxContinuations = 50;
constexpr int kMaxLength = 1000;

Response reply(int status, const json& body) { return Response{status, body.dump(), "application/json"}; }

Response error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return reply(status, extra);
}

std::optional<json> parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    auto j = json::parse(body);
    if (!j.is_object()) return std::nullopt;
    return j;
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

// A bare note body is accepted as well as a full tune.
std::string as_tune(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string_view line(text.data() + pos, (end == std::string::npos ? text.size() : end) - pos);
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos && line.substr(first).starts_with("X:")) return text;
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return "X:1\nT:seed\nM:4/4\nL:1/8\nK:C\n" + text + "\n";
}

json note_json(const MelodyModel& model, const SessionRecord& s, int pitch, int duration) {
  const auto& token = model.vocab.pitch_at(pitch);
  json j{{"pitch_token", token.to_string()},
         {"duration_token", to_string(model.vocab.duration_at(duration))},
         {"duration", to_string(model.vocab.duration_at(duration) * s.base)}};
  if (token.kind == PitchToken::Kind::pitch) {
    j["midi"] = token.semitone - s.shift;
  } else {
    j["midi"] = nullptr;
  }
  return j;
}

json melody_json(const MelodyModel& model, const SessionRecord& s) {
  json notes = json::array();
  for (std::size_t i = 0; i < s.melody.size(); ++i) {
    notes.push_back(note_json(model, s, s.melody.pitches[i], s.melody.durations[i]));
  }
  return notes;
}

template <class T>
std::optional<T> field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) return std::nullopt;
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) return std::nullopt;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

}  // namespace

Service::Service(MelodyModel model, std::uint64_t server_seed, std::chrono::seconds ttl, Clock clock)
    : model_(std::move(model)), ttl_(ttl), clock_(std::move(clock)), master_rng_(server_seed) {
  model_.validate();
}

std::chrono::steady_clock::time_point Service::now() const {
  return clock_ ? clock_() : std::chrono::steady_clock::now();
}

std::uint64_t Service::next_server_seed() { return master_rng_(); }

std::size_t Service::evict_expired() {
  std::lock_guard lock(mutex_);
  const auto t = now();
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (t - it->second.last_used > ttl_) {
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

std::size_t Service::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

Response Service::get_model() const {
  const auto dims_json = [](const gru::NetworkParams& p) {
    return json{{"x", p.dims().input}, {"h", p.dims().hidden}, {"o", p.dims().output}};
  };
  const auto ckpt = model_to_json(model_);
  return reply(200, json{{"vocab", ckpt.at("vocab")},
                         {"rhythm", {{"dims", dims_json(model_.rhythm)}}},
                         {"melody", {{"dims", dims_json(model_.melody)}}},
                         {"training_meta", ckpt.at("training_meta")}});
}

Response Service::create_session() {
  evict_expired();
  std::lock_guard lock(mutex_);
  SessionRecord s;
  char buf[32];
  do {
    std::snprintf(buf, sizeof buf, "%04llx%016llx", static_cast<unsigned long long>(++id_counter_ & 0xffff),
                  static_cast<unsigned long long>(master_rng_()));
  } while (sessions_.contains(buf));
  s.id = buf;
  s.last_used = now();
  s.key = abc::KeySignature('C', 0, abc::Mode::major);
  sessions_[s.id] = s;
  return reply(201, json{{"id", s.id}});
}

Response Service::get_session(const std::string& id) {
  evict_expired();
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return error(404, "unknown session");
  auto& s = it->second;
  s.last_used = now();
  json history = json::array();
  for (const auto& c : s.history) {
    history.push_back(json{{"id", c.id},
                           {"offered_at", c.base_len},
                           {"accepted_prefix", c.accepted_prefix ? json(*c.accepted_prefix) : json(nullptr)}});
  }
  return reply(200, json{{"id", s.id}, {"seeded", s.seeded}, {"length", s.melody.size()},
                         {"melody", melody_json(model_, s)}, {"history", std::move(history)}});
}

Response Service::set_seed(const std::string& id, const std::string& body) {
  const auto req = parse_body(body);
  if (!req) return error(400, "request body must be a JSON object");
  const auto text = field<std::string>(*req, "abc", "");
  if (!text || text->empty()) return error(400, "field 'abc' must be a non-empty string");

  abc::Score score;
  try {
    score = abc::parse_tune_text(as_tune(*text));
  } catch (const abc::AbcError& e) {
    return error(400, "invalid abc", json{{"code", abc::to_string(e.kind())}, {"detail", e.what()}});
  }
  NormalizedScore normalized;
  EncodedSong encoded;
  try {
    normalized = normalize_score(score);
    encoded = encode_prefix(normalized.score, model_.vocab);
  } catch (const OutOfVocabularyError& e) {
    return error(422, "out-of-vocabulary seed tokens", json{{"tokens", e.tokens()}});
  } catch (const std::invalid_argument& e) {
    return error(400, "invalid abc", json{{"detail", e.what()}});
  }

  evict_expired();
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return error(404, "unknown session");
  auto& s = it->second;
  s.last_used = now();
  s.seeded = true;
  s.melody = std::move(encoded);
  s.base = normalized.base;
  s.shift = normalized.shift;
  s.key = score.header.key;
  s.meter = score.header.meter;
  s.history.clear();
  return reply(200, json{{"id", s.id}, {"length", s.melody.size()}, {"melody", melody_json(model_, s)}});
}

Response Service::continuations(const std::string& id, const std::string& body) {
  const auto req = parse_body(body);
  if (!req) return error(400, "request body must be a JSON object");
  const auto n = field<int>(*req, "n", 5);
  const auto length = field<int>(*req, "length", 16);
  const auto temperature = field<double>(*req, "temperature", 1.0);
  if (!n || *n < 1 || *n > kMaxContinuations) return error(400, "'n' must be an integer in [1, 50]");
  if (!length || *length < 1 || *length > kMaxLength) return error(400, "'length' must be an integer in [1, 1000]");
  if (!temperature || !(*temperature > 0.0) || !std::isfinite(*temperature)) {
    return error(400, "'temperature' must be positive");
  }
  std::optional<std::uint64_t> rng_seed;
  if (req->contains("rng_seed")) {
    const auto v = field<std::uint64_t>(*req, "rng_seed", 0);
    if (!v) return error(400, "'rng_seed' must be a non-negative integer");
    rng_seed = *v;
  }

  evict_expired();
  SessionRecord snapshot;
  std::uint64_t seed = 0;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return error(404, "unknown session");
    it->second.last_used = now();
    if (it->second.melody.size() == 0) return error(409, "session has no seed melody");
    snapshot = it->second;
    seed = rng_seed ? *rng_seed : next_server_seed();
  }

  // Generation runs outside the lock on a private copy.
  GenerationConfig config;
  config.temperature = *temperature;
  config.max_notes = static_cast<int>(snapshot.melody.size()) + *length;
  std::mt19937_64 rng(seed);
  std::vector<OfferedContinuation> offered;
  for (int k = 0; k < *n; ++k) {
    const auto song = continue_song(model_, snapshot.melody, config, rng);
    OfferedContinuation c;
    c.base_len = snapshot.melody.size();
    c.notes.pitches.assign(song.encoded.pitches.begin() + static_cast<std::ptrdiff_t>(song.seed_len),
                           song.encoded.pitches.end());
    c.notes.durations.assign(song.encoded.durations.begin() + static_cast<std::ptrdiff_t>(song.seed_len),
                             song.encoded.durations.end());
    c.probs = song.note_probs;
    c.ended = song.terminated == Termination::ended_naturally;
    offered.push_back(std::move(c));
  }

  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return error(404, "unknown session");
  auto& s = it->second;
  if (s.melody != snapshot.melody) return error(409, "session changed during the request");
  json out = json::array();
  for (auto& c : offered) {
    c.id = s.next_continuation++;
    json notes = json::array();
    for (std::size_t i = 0; i < c.notes.size(); ++i) {
      auto nj = note_json(model_, s, c.notes.pitches[i], c.notes.durations[i]);
      nj["prob"] = c.probs[i];
      notes.push_back(std::move(nj));
    }
    out.push_back(json{{"id", c.id}, {"ended", c.ended}, {"notes", std::move(notes)}});
    s.history.push_back(std::move(c));
  }
  return reply(200, json{{"rng_seed", seed}, {"continuations", std::move(out)}});
}

Response Service::accept(const std::string& id, const std::string& body) {
  const auto req = parse_body(body);
  if (!req) return error(400, "request body must be a JSON object");
  if (!req->contains("continuation_id") || !req->contains("prefix_len")) {
    return error(400, "fields 'continuation_id' and 'prefix_len' are required");
  }
  const auto cid = field<int>(*req, "continuation_id", 0);
  const auto prefix = field<long long>(*req, "prefix_len", 0);
  if (!cid || !prefix || *prefix < 0) return error(400, "'continuation_id' and 'prefix_len' must be integers");

  evict_expired();
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return error(404, "unknown session");
  auto& s = it->second;
  s.last_used = now();
  auto c = std::find_if(s.history.begin(), s.history.end(), [&](const auto& h) { return h.id == *cid; });
  if (c == s.history.end()) return error(404, "unknown continuation");
  if (c->base_len != s.melody.size()) return error(409, "continuation is stale; the melody has changed since");
  const std::size_t usable = c->ended ? c->notes.size() - 1 : c->notes.size();
  if (static_cast<std::size_t>(*prefix) > usable) {
    return error(400, "'prefix_len' exceeds the continuation", json{{"max", usable}});
  }
  const auto k = static_cast<std::ptrdiff_t>(*prefix);
  s.melody.pitches.insert(s.melody.pitches.end(), c->notes.pitches.begin(), c->notes.pitches.begin() + k);
  s.melody.durations.insert(s.melody.durations.end(), c->notes.durations.begin(), c->notes.durations.begin() + k);
  c->accepted_prefix = static_cast<std::size_t>(*prefix);
  return reply(200, json{{"id", s.id}, {"length", s.melody.size()}, {"melody", melody_json(model_, s)}});
}

Response Service::export_abc(const std::string& id) {
  evict_expired();
  SessionRecord s;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return error(404, "unknown session");
    it->second.last_used = now();
    s = it->second;
  }
  if (s.melody.size() == 0) return error(409, "session melody is empty");
  try {
    auto score = decode_song(s.melody, model_.vocab, s.base, -s.shift);
    score.header.reference_number = 1;
    score.header.title = "Session " + s.id;
    score.header.key = s.key;
    score.header.meter = s.meter;
    return reply(200, json{{"abc", abc::emit_abc(score)}});
  } catch (const std::exception& e) {
    return error(422, "melody cannot be written as abc", json{{"detail", e.what()}});
  }
}

// --- HTTP ------------------------------------------------------------------

HttpServer::HttpServer(Service& service, std::string cors_origin) : server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});

  const auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };

  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Get("/model", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.get_model());
  });
  srv.Post("/session", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.create_session());
  });
  srv.Get(R"(/session/([0-9a-f]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_session(req.matches[1]));
  });
  srv.Post(R"(/session/([0-9a-f]+)/seed)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.set_seed(req.matches[1], req.body));
  });
  srv.Post(R"(/session/([0-9a-f]+)/continuations)",
           [&service, send](const httplib::Request& req, httplib::Response& res) {
             send(res, service.continuations(req.matches[1], req.body));
           });
  srv.Post(R"(/session/([0-9a-f]+)/accept)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.accept(req.matches[1], req.body));
  });
  srv.Get(R"(/session/([0-9a-f]+)/export)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.export_abc(req.matches[1]));
  });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(json{{"error", res.status == 404 ? "not found" : "request failed"}}.dump(),
                      "application/json");
    }
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool HttpServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

int resolve_port(int fallback) {
  const char* env = std::getenv("FOLKGEN_PORT");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 0 || v > 65535) return fallback;
  return static_cast<int>(v);
}

}  // namespace folkgen::service
