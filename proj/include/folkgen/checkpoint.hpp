#pragma once

// JSON checkpoint of a MelodyModel.
//
//   {"version": 1, "vocab": {"pitch": [...], "duration": [...]},
//    "rhythm": <net>, "melody": <net>, "training_meta": {...},
//    "openings": [...], "train_song_hashes": [...]}
//
// A network fragment is {"dims": {"x", "h", "o"}, "matrices": {name:
// {rows, cols, data}}, "seed", "version": 1} with row-major data.

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "folkgen/model.hpp"

namespace folkgen {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json network_to_json(const gru::NetworkParams& params, std::uint64_t seed);
gru::NetworkParams network_from_json(const nlohmann::json& j, std::uint64_t* seed = nullptr);

nlohmann::json vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const MelodyModel& model);
MelodyModel model_from_json(const nlohmann::json& j);

std::string serialize_model(const MelodyModel& model);
MelodyModel deserialize_model(const std::string& text);

void save_model(const MelodyModel& model, const std::filesystem::path& path);
MelodyModel load_model(const std::filesystem::path& path);

/// Order-sensitive digest of a list of songs, as 16 hex digits.
std::string corpus_hash(std::span<const EncodedSong> songs);

/// Writes through a temporary file and renames, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace folkgen
