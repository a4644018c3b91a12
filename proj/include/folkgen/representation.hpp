#pragma once

// Note-level representation shared by training and generation: every tune is
// transposed to C major / A minor, durations are expressed relative to the
// tune's most common duration, and each note becomes a (pitch index, duration
// index) pair over vocabularies built from the training songs.

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "folkgen/abc.hpp"
#include "folkgen/rational.hpp"

namespace folkgen {

struct PitchToken {
  enum class Kind { pitch, silence, song_ending };
  Kind kind = Kind::pitch;
  int semitone = 0;

  static PitchToken pitch(int semitone) { return {Kind::pitch, semitone}; }
  static PitchToken silence() { return {Kind::silence, 0}; }
  static PitchToken song_ending() { return {Kind::song_ending, 0}; }

  /// "60", "silence", "end".
  std::string to_string() const;

  // Pitches ascending, then silence, then song ending.
  friend auto operator<=>(const PitchToken&, const PitchToken&) = default;
};

/// A duration relative to the song's modal duration.
using DurationToken = Rational;

/// Score after transposition and duration normalisation.
struct NormalizedScore {
  abc::Score score;  // pitches transposed, durations relative to `base`
  Rational base{1};  // modal duration of the original tune
  int shift = 0;     // semitones added to every original pitch
};

/// Shift (in [-6, +5], ties downward) moving the key's tonic to C or A.
int transposition_shift(const abc::KeySignature& key);

abc::Score transpose_to_c(const abc::Score& score);

struct DurationNormalization {
  std::vector<DurationToken> tokens;
  Rational base;
};

/// Divides every duration by the modal one (smallest value wins ties).
DurationNormalization normalize_durations(const abc::Score& score);

NormalizedScore normalize_score(const abc::Score& score);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<int> pitches, std::vector<Rational> durations);

  std::size_t pitch_size() const { return pitch_tokens_.size(); }
  std::size_t duration_size() const { return duration_tokens_.size(); }

  const std::vector<PitchToken>& pitch_tokens() const { return pitch_tokens_; }
  const std::vector<DurationToken>& duration_tokens() const { return duration_tokens_; }

  std::optional<int> pitch_index(const PitchToken& token) const;
  std::optional<int> duration_index(const DurationToken& token) const;

  const PitchToken& pitch_at(int index) const { return pitch_tokens_.at(static_cast<std::size_t>(index)); }
  const DurationToken& duration_at(int index) const {
    return duration_tokens_.at(static_cast<std::size_t>(index));
  }

  int silence_index() const { return static_cast<int>(pitch_tokens_.size()) - 2; }
  int song_ending_index() const { return static_cast<int>(pitch_tokens_.size()) - 1; }
  /// Index of the relative duration "1"; throws if the vocabulary lacks it.
  int unit_duration_index() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.pitch_tokens_ == b.pitch_tokens_ && a.duration_tokens_ == b.duration_tokens_;
  }

 private:
  std::vector<PitchToken> pitch_tokens_;
  std::vector<DurationToken> duration_tokens_;
  std::map<PitchToken, int> pitch_index_;
  std::map<DurationToken, int> duration_index_;
};

/// Vocabulary over every pitch and relative duration of the given normalized
/// scores, plus silence and song-ending. Throws std::invalid_argument when empty.
Vocabulary build_vocabulary(std::span<const abc::Score> normalized);

struct EncodedSong {
  std::vector<int> pitches;
  std::vector<int> durations;

  std::size_t size() const { return pitches.size(); }
  friend bool operator==(const EncodedSong&, const EncodedSong&) = default;
};

class OutOfVocabularyError : public std::runtime_error {
 public:
  explicit OutOfVocabularyError(std::vector<std::string> tokens);
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

/// Encodes a normalized score and appends the song-ending token (paired with
/// duration "1"). Throws OutOfVocabularyError listing every unknown token.
EncodedSong encode_song(const abc::Score& normalized, const Vocabulary& vocab);

/// Same as encode_song without the terminating song-ending token.
EncodedSong encode_prefix(const abc::Score& normalized, const Vocabulary& vocab);

/// Inverse of encode_song up to the first song-ending token: durations are
/// multiplied by `base` and `shift` semitones are added to every pitch.
/// Throws std::out_of_range for invalid indices and std::invalid_argument if
/// no note precedes the song ending.
abc::Score decode_song(const EncodedSong& encoded, const Vocabulary& vocab, Rational base = Rational(1),
                       int shift = 0);

/// Column-stacked one-hot matrices (vocabulary size x song length).
Eigen::MatrixXd pitch_matrix(const EncodedSong& song, const Vocabulary& vocab);
Eigen::MatrixXd duration_matrix(const EncodedSong& song, const Vocabulary& vocab);

// --- corpus statistics ----------------------------------------------------

enum class TokenStream { pitch, duration };

struct TransitionMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd probs;       // row = current token, column = next token
  std::vector<bool> observed;  // rows with at least one transition
  std::vector<double> counts;  // number of transitions leaving each row
};

/// Maximum-likelihood first-order transition probabilities.
TransitionMatrix transition_stats(std::span<const EncodedSong> corpus, const Vocabulary& vocab,
                                  TokenStream which);

/// Rows as lines, first line holds the column labels.
std::string to_csv(const TransitionMatrix& matrix);

/// Stats report as JSON text: vocabularies, song count, length mean/std
/// (in notes, song-ending excluded) and both transition matrices.
std::string stats_report_json(std::span<const EncodedSong> corpus, const Vocabulary& vocab);

/// Sequence FNV-1a hash; used for corpus bookkeeping and novelty checks.
std::uint64_t song_hash(const EncodedSong& song);

}  // namespace folkgen
