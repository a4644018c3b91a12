#pragma once

// Rhythm and melody networks bound together.
//
// For note n the rhythm network reads (d[n], p[n]) and predicts d[n+1]; the
// melody network reads (p[n], d[n+1]) and predicts p[n+1]. During generation
// d[n+1] is the duration just sampled from the rhythm network.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "folkgen/gru.hpp"
#include "folkgen/representation.hpp"

namespace folkgen {

/// Empirical distribution of the first two notes of the training songs.
struct Opening {
  int pitch0 = 0;
  int duration0 = 0;
  int pitch1 = 0;
  int duration1 = 0;
  std::uint64_t count = 0;
  friend bool operator==(const Opening&, const Opening&) = default;
};

struct TrainingMeta {
  int epochs = 0;
  int best_epoch = -1;
  double best_test_nll = std::numeric_limits<double>::infinity();
  std::string corpus_hash;  // training split
  std::string test_hash;    // evaluation split
  std::uint64_t seed = 0;
};

struct MelodyModel {
  Vocabulary vocab;
  gru::NetworkParams rhythm;  // input D + P, output D
  gru::NetworkParams melody;  // input P + D, output P
  std::uint64_t rhythm_seed = 0;
  std::uint64_t melody_seed = 0;
  std::vector<Opening> openings;
  std::vector<std::uint64_t> train_song_hashes;
  TrainingMeta meta;

  /// Randomly initialised networks sized for `vocab`.
  static MelodyModel create(Vocabulary vocab, const std::vector<int>& hidden, std::uint64_t seed);
  /// All-zero networks: every prediction is uniform.
  static MelodyModel zeros(Vocabulary vocab, const std::vector<int>& hidden);

  int pitch_size() const { return static_cast<int>(vocab.pitch_size()); }
  int duration_size() const { return static_cast<int>(vocab.duration_size()); }

  /// Throws std::invalid_argument when network widths disagree with the vocabulary.
  void validate() const;
};

gru::NetworkDims rhythm_dims(const Vocabulary& vocab, const std::vector<int>& hidden);
gru::NetworkDims melody_dims(const Vocabulary& vocab, const std::vector<int>& hidden);

struct ModelState {
  gru::NetworkState rhythm;
  gru::NetworkState melody;
  std::optional<int> last_pitch;
  std::optional<int> last_duration;
};

ModelState init_state(const MelodyModel& model);

gru::Vector rhythm_input(const Vocabulary& vocab, int duration, int pitch);
gru::Vector melody_input(const Vocabulary& vocab, int pitch, int next_duration);

/// Feeds note (d_n, p_n) to the rhythm network; returns the distribution of
/// d[n+1]. Advances only the rhythm state. Throws std::out_of_range.
gru::StepOutput next_duration_dist(const MelodyModel& model, ModelState& state, int duration, int pitch);

/// Feeds (p_n, d[n+1]) to the melody network; returns the distribution of
/// p[n+1]. Advances only the melody state. Throws std::out_of_range.
gru::StepOutput next_pitch_dist(const MelodyModel& model, ModelState& state, int pitch, int next_duration);

struct SongNll {
  double rhythm = 0.0;
  double melody = 0.0;
  double total() const { return rhythm + melody; }
};

/// Inputs and targets of both networks for one song under teacher forcing:
/// N - 1 prediction steps for a song of N tokens.
struct TeacherForced {
  std::vector<gru::Vector> rhythm_inputs;
  std::vector<int> rhythm_targets;
  std::vector<gru::Vector> melody_inputs;
  std::vector<int> melody_targets;
};

TeacherForced teacher_forced(const Vocabulary& vocab, const EncodedSong& song);

/// Mean NLL of each network over the song's N - 1 predictions.
SongNll teacher_forced_nll(const MelodyModel& model, const EncodedSong& song);

/// Opening table from the first two notes of each song.
std::vector<Opening> collect_openings(std::span<const EncodedSong> songs);

}  // namespace folkgen
