#include "folkgen/representation.hpp"

#include <algorithm>
#include <set>

namespace folkgen {

std::string PitchToken::to_string() const {
  switch (kind) {
    case Kind::pitch: return std::to_string(semitone);
    case Kind::silence: return "silence";
    case Kind::song_ending: return "end";
  }
  return "?";
}

int transposition_shift(const abc::KeySignature& key) {
  const int target = key.major_family() ? 0 : 9;
  int shift = ((target - key.tonic_pitch_class()) % 12 + 12) % 12;
  if (shift >= 6) shift -= 12;
  return shift;
}

abc::Score transpose_to_c(const abc::Score& score) {
  const int shift = transposition_shift(score.header.key);
  abc::Score out = score;
  for (auto& event : out.events) {
    if (!event.is_rest()) event.pitch += shift;
  }
  out.header.key = score.header.key.major_family() ? abc::KeySignature('C', 0, abc::Mode::major)
                                                   : abc::KeySignature('A', 0, abc::Mode::minor);
  return out;
}

DurationNormalization normalize_durations(const abc::Score& score) {
  if (score.events.empty()) throw std::invalid_argument("cannot normalize an empty score");
  std::map<Rational, int> counts;
  for (const auto& event : score.events) ++counts[event.duration];
  // std::map iterates ascending, so the first maximum is the smallest modal value.
  auto modal = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > modal->second) modal = it;
  }
  DurationNormalization out{{}, modal->first};
  out.tokens.reserve(score.events.size());
  for (const auto& event : score.events) out.tokens.push_back(event.duration / out.base);
  return out;
}

NormalizedScore normalize_score(const abc::Score& score) {
  NormalizedScore out;
  out.shift = transposition_shift(score.header.key);
  out.score = transpose_to_c(score);
  auto durations = normalize_durations(score);
  out.base = durations.base;
  for (std::size_t i = 0; i < out.score.events.size(); ++i) {
    out.score.events[i].duration = durations.tokens[i];
  }
  out.score.header.unit_note_length = Rational(1);
  return out;
}

Vocabulary::Vocabulary(std::vector<int> pitches, std::vector<Rational> durations) {
  std::sort(pitches.begin(), pitches.end());
  pitches.erase(std::unique(pitches.begin(), pitches.end()), pitches.end());
  std::sort(durations.begin(), durations.end());
  durations.erase(std::unique(durations.begin(), durations.end()), durations.end());
  for (int p : pitches) pitch_tokens_.push_back(PitchToken::pitch(p));
  pitch_tokens_.push_back(PitchToken::silence());
  pitch_tokens_.push_back(PitchToken::song_ending());
  duration_tokens_ = std::move(durations);
  for (std::size_t i = 0; i < pitch_tokens_.size(); ++i) pitch_index_[pitch_tokens_[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < duration_tokens_.size(); ++i) {
    if (duration_tokens_[i] <= 0) throw std::invalid_argument("durations must be positive");
    duration_index_[duration_tokens_[i]] = static_cast<int>(i);
  }
}

std::optional<int> Vocabulary::pitch_index(const PitchToken& token) const {
  const auto it = pitch_index_.find(token);
  if (it == pitch_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Vocabulary::duration_index(const DurationToken& token) const {
  const auto it = duration_index_.find(token);
  if (it == duration_index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::unit_duration_index() const {
  const auto index = duration_index(Rational(1));
  if (!index) throw std::logic_error("vocabulary has no unit duration");
  return *index;
}

Vocabulary build_vocabulary(std::span<const abc::Score> normalized) {
  if (normalized.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  std::set<int> pitches;
  std::set<Rational> durations{Rational(1)};
  for (const auto& score : normalized) {
    for (const auto& event : score.events) {
      if (!event.is_rest()) pitches.insert(event.pitch);
      durations.insert(event.duration);
    }
  }
  return Vocabulary({pitches.begin(), pitches.end()}, {durations.begin(), durations.end()});
}

OutOfVocabularyError::OutOfVocabularyError(std::vector<std::string> tokens)
    : std::runtime_error([&] {
        std::string message = "out-of-vocabulary tokens:";
        for (const auto& t : tokens) message += " " + t;
        return message;
      }()),
      tokens_(std::move(tokens)) {}

EncodedSong encode_prefix(const abc::Score& normalized, const Vocabulary& vocab) {
  EncodedSong out;
  std::set<std::string> missing;
  for (const auto& event : normalized.events) {
    const auto token = event.is_rest() ? PitchToken::silence() : PitchToken::pitch(event.pitch);
    const auto pitch = vocab.pitch_index(token);
    const auto duration = vocab.duration_index(event.duration);
    if (!pitch) missing.insert("pitch:" + token.to_string());
    if (!duration) missing.insert("duration:" + to_string(event.duration));
    out.pitches.push_back(pitch.value_or(-1));
    out.durations.push_back(duration.value_or(-1));
  }
  if (!missing.empty()) throw OutOfVocabularyError({missing.begin(), missing.end()});
  return out;
}

EncodedSong encode_song(const abc::Score& normalized, const Vocabulary& vocab) {
  EncodedSong out = encode_prefix(normalized, vocab);
  out.pitches.push_back(vocab.song_ending_index());
  out.durations.push_back(vocab.unit_duration_index());
  return out;
}

abc::Score decode_song(const EncodedSong& encoded, const Vocabulary& vocab, Rational base, int shift) {
  if (encoded.pitches.size() != encoded.durations.size()) {
    throw std::invalid_argument("pitch and duration sequences differ in length");
  }
  abc::Score score;
  score.header.key = abc::KeySignature('C', 0, abc::Mode::major);
  score.header.meter = abc::Meter{4, 4, false};
  score.header.unit_note_length = Rational(1, 8);
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const int p = encoded.pitches[i];
    const int d = encoded.durations[i];
    if (p < 0 || static_cast<std::size_t>(p) >= vocab.pitch_size()) {
      throw std::out_of_range("pitch index " + std::to_string(p) + " out of range");
    }
    if (d < 0 || static_cast<std::size_t>(d) >= vocab.duration_size()) {
      throw std::out_of_range("duration index " + std::to_string(d) + " out of range");
    }
    const auto& token = vocab.pitch_at(p);
    if (token.kind == PitchToken::Kind::song_ending) break;
    const Rational duration = vocab.duration_at(d) * base;
    score.events.push_back(token.kind == PitchToken::Kind::silence
                               ? abc::NoteEvent::rest(duration)
                               : abc::NoteEvent::note(token.semitone + shift, duration));
  }
  if (score.events.empty()) throw std::invalid_argument("encoded song has no notes before the song ending");
  return score;
}

namespace {

Eigen::MatrixXd one_hot_columns(const std::vector<int>& indices, std::size_t rows) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(indices.size()));
  for (std::size_t n = 0; n < indices.size(); ++n) m(indices[n], static_cast<Eigen::Index>(n)) = 1.0;
  return m;
}

}  // namespace

Eigen::MatrixXd pitch_matrix(const EncodedSong& song, const Vocabulary& vocab) {
  return one_hot_columns(song.pitches, vocab.pitch_size());
}

Eigen::MatrixXd duration_matrix(const EncodedSong& song, const Vocabulary& vocab) {
  return one_hot_columns(song.durations, vocab.duration_size());
}

std::uint64_t song_hash(const EncodedSong& song) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 4; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < song.size(); ++i) {
    mix(static_cast<std::uint64_t>(song.pitches[i]));
    mix(static_cast<std::uint64_t>(song.durations[i]));
  }
  mix(song.size());
  return h;
}

}  // namespace folkgen
