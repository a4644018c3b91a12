#include "folkgen/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace folkgen {

using nlohmann::json;

namespace {

constexpr int kVersion = 1;

// Non-finite values have no JSON spelling; they never belong in a checkpoint.
void require_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw CheckpointError("non-finite value in " + where);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <class T>
T get_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw CheckpointError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json network_to_json(const gru::NetworkParams& params, std::uint64_t seed) {
  const auto& dims = params.dims();
  json matrices = json::object();
  for (const auto& block : params.blocks()) {
    // Eigen storage is column-major; the file is row-major.
    json data = json::array();
    for (Eigen::Index i = 0; i < block.rows; ++i) {
      for (Eigen::Index c = 0; c < block.cols; ++c) {
        const double v = block.data[c * block.rows + i];
        require_finite(v, block.name);
        data.push_back(v);
      }
    }
    matrices[block.name] = json{{"rows", block.rows}, {"cols", block.cols}, {"data", std::move(data)}};
  }
  return json{{"dims", {{"x", dims.input}, {"h", dims.hidden}, {"o", dims.output}}},
              {"matrices", std::move(matrices)},
              {"seed", seed},
              {"version", kVersion}};
}

gru::NetworkParams network_from_json(const json& j, std::uint64_t* seed) {
  if (get_field<int>(j, "version") != kVersion) throw CheckpointError("unsupported network version");
  const json& d = j.at("dims");
  gru::NetworkDims dims{get_field<int>(d, "x"), get_field<std::vector<int>>(d, "h"), get_field<int>(d, "o")};
  gru::NetworkParams params;
  try {
    params = gru::NetworkParams::zeros(dims);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad network dims: ") + e.what());
  }
  const json& matrices = j.at("matrices");
  if (!matrices.is_object() || matrices.size() != params.blocks().size()) {
    throw CheckpointError("network has the wrong set of matrices");
  }
  for (auto& block : params.blocks()) {
    if (!matrices.contains(block.name)) throw CheckpointError("missing matrix " + block.name);
    const json& m = matrices.at(block.name);
    if (get_field<Eigen::Index>(m, "rows") != block.rows || get_field<Eigen::Index>(m, "cols") != block.cols) {
      throw CheckpointError("shape mismatch for " + block.name);
    }
    const auto data = get_field<std::vector<double>>(m, "data");
    if (static_cast<Eigen::Index>(data.size()) != block.size()) {
      throw CheckpointError("wrong element count for " + block.name);
    }
    for (Eigen::Index i = 0; i < block.rows; ++i) {
      for (Eigen::Index c = 0; c < block.cols; ++c) {
        const double v = data[static_cast<std::size_t>(i * block.cols + c)];
        require_finite(v, block.name);
        block.data[c * block.rows + i] = v;
      }
    }
  }
  if (seed != nullptr) *seed = get_field<std::uint64_t>(j, "seed");
  return params;
}

json vocabulary_to_json(const Vocabulary& vocab) {
  json pitch = json::array();
  for (const auto& t : vocab.pitch_tokens()) pitch.push_back(t.to_string());
  json duration = json::array();
  for (const auto& t : vocab.duration_tokens()) duration.push_back(to_string(t));
  return json{{"pitch", std::move(pitch)}, {"duration", std::move(duration)}};
}

Vocabulary vocabulary_from_json(const json& j) {
  const auto pitch = get_field<std::vector<std::string>>(j, "pitch");
  const auto duration = get_field<std::vector<std::string>>(j, "duration");
  if (pitch.size() < 2 || pitch[pitch.size() - 2] != "silence" || pitch.back() != "end") {
    throw CheckpointError("pitch vocabulary must end with silence and end");
  }
  std::vector<int> pitches;
  for (std::size_t i = 0; i + 2 < pitch.size(); ++i) {
    try {
      std::size_t used = 0;
      pitches.push_back(std::stoi(pitch[i], &used));
      if (used != pitch[i].size()) throw std::invalid_argument(pitch[i]);
    } catch (const std::exception&) {
      throw CheckpointError("bad pitch token '" + pitch[i] + "'");
    }
  }
  std::vector<Rational> durations;
  for (const auto& s : duration) {
    try {
      durations.push_back(parse_rational(s));
    } catch (const std::exception&) {
      throw CheckpointError("bad duration token '" + s + "'");
    }
  }
  Vocabulary vocab(pitches, durations);
  if (vocab.pitch_size() != pitch.size() || vocab.duration_size() != duration.size()) {
    throw CheckpointError("vocabulary tokens are not sorted and distinct");
  }
  if (!vocab.duration_index(Rational(1))) throw CheckpointError("vocabulary lacks the unit duration");
  return vocab;
}

json model_to_json(const MelodyModel& model) {
  json openings = json::array();
  for (const auto& o : model.openings) {
    openings.push_back(json{{"p0", o.pitch0}, {"d0", o.duration0}, {"p1", o.pitch1}, {"d1", o.duration1},
                            {"count", o.count}});
  }
  json hashes = json::array();
  for (auto h : model.train_song_hashes) hashes.push_back(hex64(h));
  const auto& m = model.meta;
  json best = std::isfinite(m.best_test_nll) ? json(m.best_test_nll) : json(nullptr);
  return json{{"version", kVersion},
              {"vocab", vocabulary_to_json(model.vocab)},
              {"rhythm", network_to_json(model.rhythm, model.rhythm_seed)},
              {"melody", network_to_json(model.melody, model.melody_seed)},
              {"training_meta",
               {{"epochs", m.epochs},
                {"best_epoch", m.best_epoch},
                {"best_test_nll", best},
                {"corpus_hash", m.corpus_hash},
                {"test_hash", m.test_hash},
                {"seed", m.seed}}},
              {"openings", std::move(openings)},
              {"train_song_hashes", std::move(hashes)}};
}

MelodyModel model_from_json(const json& j) {
  if (!j.is_object()) throw CheckpointError("checkpoint must be a JSON object");
  if (get_field<int>(j, "version") != kVersion) throw CheckpointError("unsupported checkpoint version");
  MelodyModel model;
  try {
    model.vocab = vocabulary_from_json(j.at("vocab"));
    model.rhythm = network_from_json(j.at("rhythm"), &model.rhythm_seed);
    model.melody = network_from_json(j.at("melody"), &model.melody_seed);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }

  if (j.contains("training_meta")) {
    const json& tm = j.at("training_meta");
    model.meta.epochs = get_field<int>(tm, "epochs");
    model.meta.best_epoch = tm.value("best_epoch", -1);
    const json& best = tm.at("best_test_nll");
    model.meta.best_test_nll = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    model.meta.corpus_hash = get_field<std::string>(tm, "corpus_hash");
    model.meta.test_hash = tm.value("test_hash", std::string());
    model.meta.seed = tm.value("seed", std::uint64_t{0});
  }

  const int p = model.pitch_size();
  const int d = model.duration_size();
  for (const auto& o : j.value("openings", json::array())) {
    Opening op{get_field<int>(o, "p0"), get_field<int>(o, "d0"), get_field<int>(o, "p1"), get_field<int>(o, "d1"),
               get_field<std::uint64_t>(o, "count")};
    const bool ok = op.pitch0 >= 0 && op.pitch0 < p && op.pitch1 >= 0 && op.pitch1 < p && op.duration0 >= 0 &&
                    op.duration0 < d && op.duration1 >= 0 && op.duration1 < d;
    if (!ok) throw CheckpointError("opening refers to tokens outside the vocabulary");
    model.openings.push_back(op);
  }
  for (const auto& h : j.value("train_song_hashes", json::array())) {
    model.train_song_hashes.push_back(std::stoull(h.get<std::string>(), nullptr, 16));
  }
  return model;
}

std::string serialize_model(const MelodyModel& model) { return model_to_json(model).dump() + "\n"; }

MelodyModel deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return model_from_json(j);
}

void save_model(const MelodyModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

MelodyModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string corpus_hash(std::span<const EncodedSong> songs) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& song : songs) {
    std::uint64_t s = song_hash(song);
    for (int i = 0; i < 8; ++i) {
      h ^= (s >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return hex64(h);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace folkgen
