#pragma once

// Closed-loop sampling from a trained MelodyModel.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "folkgen/model.hpp"

namespace folkgen {

struct GenerationConfig {
  std::uint64_t rng_seed = 0;
  int max_notes = 1000;  // total length cap, seed included
  double temperature = 1.0;
  int num_samples = 1;
  bool greedy = false;  // argmax instead of sampling

  void validate() const;
};

enum class Termination { ended_naturally, truncated };

std::string to_string(Termination t);

struct GeneratedSong {
  EncodedSong encoded;  // ends with the song-ending token when ended naturally
  Termination terminated = Termination::truncated;
  std::size_t seed_len = 0;
  /// Untempered P(d) * P(p | d) of each generated token pair, in order.
  std::vector<double> note_probs;

  /// Notes in the song, song ending excluded.
  std::size_t note_count() const;
};

/// exp(logits / T) normalised, with max subtraction.
gru::Vector tempered_distribution(const gru::Vector& logits, double temperature);

/// Draws an index from a probability vector.
int sample_index(const gru::Vector& probs, std::mt19937_64& rng);

int argmax_index(const gru::Vector& values);

/// Warms both networks up on the seed, then samples duration and pitch
/// alternately until the song ending or max_notes. Throws
/// std::invalid_argument for an empty seed or one with an interior song
/// ending, and std::out_of_range for indices outside the vocabulary.
GeneratedSong continue_song(const MelodyModel& model, const EncodedSong& seed, const GenerationConfig& config,
                            std::mt19937_64& rng);

/// Same, with an RNG seeded from config.rng_seed.
GeneratedSong continue_song(const MelodyModel& model, const EncodedSong& seed, const GenerationConfig& config);

/// Autonomous mode from two given (pitch index, duration index) notes.
GeneratedSong generate_song(const MelodyModel& model, const std::array<std::pair<int, int>, 2>& first_notes,
                            const GenerationConfig& config);

struct BatchStats {
  std::size_t n = 0;
  double mean_len = 0.0;
  double std_len = 0.0;
  double terminated = 0.0;  // fraction ended naturally
  double novel = 0.0;       // fraction absent from the training songs
};

/// {"n", "mean_len", "std_len", "terminated", "novel"}
std::string to_json(const BatchStats& stats);

struct BatchResult {
  std::vector<GeneratedSong> songs;
  BatchStats stats;
};

/// num_samples songs. Sample i uses its own RNG seeded by (rng_seed, i); its
/// first two notes come from the model's opening table unless given.
BatchResult batch_generate(const MelodyModel& model, const GenerationConfig& config,
                           const std::optional<std::array<std::pair<int, int>, 2>>& first_notes = std::nullopt);

}  // namespace folkgen
