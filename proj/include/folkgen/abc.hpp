#pragma once

// Reading and writing the monophonic subset of abc notation used by folk-tune
// collections.
//
// Supported: header fields X T M L K, notes with accidentals / octave marks /
// lengths, rests, bar lines, repeats with first and second endings, ties,
// tuplets, broken rhythm, chords (first note kept) and grace notes (dropped).
// Decorations, chord symbols, lyrics, comments and other fields are consumed
// and ignored.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "folkgen/rational.hpp"

namespace folkgen::abc {

using folkgen::to_string;

enum class Mode { major, minor, dorian, phrygian, lydian, mixolydian, aeolian, locrian };

std::string_view to_string(Mode mode);

class KeySignature {
 public:
  KeySignature() = default;
  /// letter: one of A..G (upper case); accidental: -1 flat, 0, +1 sharp.
  KeySignature(char letter, int accidental, Mode mode);

  char tonic_letter() const { return letter_; }
  int tonic_accidental() const { return accidental_; }
  Mode mode() const { return mode_; }

  /// 0 = C ... 11 = B.
  int tonic_pitch_class() const;
  /// Positive for sharps, negative for flats.
  int sharps() const;
  /// Alteration (in semitones) the signature applies to a natural letter.
  int alteration(char letter) const;
  /// True for modes mapped onto C major when transposing; false for the
  /// A-minor family.
  bool major_family() const;

  /// Canonical abc spelling, e.g. "D", "Amin", "F#dor", "Bbmix".
  std::string to_string() const;

  /// Parses the value of a K: field; throws std::invalid_argument.
  static KeySignature parse(std::string_view text);

  friend bool operator==(const KeySignature&, const KeySignature&) = default;

 private:
  char letter_ = 'C';
  int accidental_ = 0;
  Mode mode_ = Mode::major;
};

struct Meter {
  int numerator = 4;
  int denominator = 4;
  bool free = false;
  /// Compound meters (6/8, 9/8, 12/8) change tuplet defaults.
  bool compound() const;
  Rational bar_length() const { return Rational(numerator, denominator); }
  std::string to_string() const;
  static Meter parse(std::string_view text);
  friend bool operator==(const Meter&, const Meter&) = default;
};

struct AbcHeader {
  int reference_number = 1;
  std::string title;
  std::optional<Meter> meter;
  Rational unit_note_length{1, 8};
  KeySignature key;
};

struct NoteEvent {
  enum class Kind { note, rest };
  Kind kind = Kind::note;
  /// Semitones, middle C = 60. Zero for rests.
  int pitch = 0;
  Rational duration{1, 8};

  static NoteEvent note(int pitch, Rational duration) { return {Kind::note, pitch, duration}; }
  static NoteEvent rest(Rational duration) { return {Kind::rest, 0, duration}; }
  bool is_rest() const { return kind == Kind::rest; }
  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

struct Score {
  AbcHeader header;
  std::vector<NoteEvent> events;
};

inline constexpr int kMinPitch = 21;
inline constexpr int kMaxPitch = 108;

// --- tokens ---------------------------------------------------------------

struct FieldToken {
  char key = 0;
  std::string value;
  bool inline_field = false;
  std::optional<KeySignature> key_signature;  // K:
  std::optional<Rational> unit;               // L:
  std::optional<Meter> meter;                 // M:
  std::optional<int> reference;               // X:
  friend bool operator==(const FieldToken&, const FieldToken&) = default;
};

struct NoteToken {
  char letter = 'C';  // as written; lower case is one octave up
  std::optional<int> accidental;  // -2..+2, 0 is an explicit natural
  int octave = 0;                 // net count of ' minus ,
  Rational length{1};
  friend bool operator==(const NoteToken&, const NoteToken&) = default;
};

struct RestToken {
  bool invisible = false;
  Rational length{1};
  friend bool operator==(const RestToken&, const RestToken&) = default;
};

struct MultiRestToken {
  int measures = 1;
  friend bool operator==(const MultiRestToken&, const MultiRestToken&) = default;
};

enum class BarKind { single, double_bar, repeat_start, repeat_end, repeat_both };

struct BarToken {
  BarKind kind = BarKind::single;
  friend bool operator==(const BarToken&, const BarToken&) = default;
};

struct EndingToken {
  std::vector<int> numbers;
  friend bool operator==(const EndingToken&, const EndingToken&) = default;
};

struct TieToken {
  friend bool operator==(const TieToken&, const TieToken&) = default;
};

struct BrokenRhythmToken {
  bool first_long = true;  // '>' lengthens the preceding note
  int count = 1;           // number of > or < characters
  friend bool operator==(const BrokenRhythmToken&, const BrokenRhythmToken&) = default;
};

struct TupletToken {
  int p = 3;
  std::optional<int> q;  // unset: abc default for p and the current meter
  std::optional<int> r;  // unset: p
  friend bool operator==(const TupletToken&, const TupletToken&) = default;
};

struct ChordOpenToken {
  friend bool operator==(const ChordOpenToken&, const ChordOpenToken&) = default;
};

struct ChordCloseToken {
  Rational length{1};
  friend bool operator==(const ChordCloseToken&, const ChordCloseToken&) = default;
};

struct VoiceOverlayToken {
  friend bool operator==(const VoiceOverlayToken&, const VoiceOverlayToken&) = default;
};

struct IgnoredToken {
  std::string text;
  friend bool operator==(const IgnoredToken&, const IgnoredToken&) = default;
};

using TokenValue =
    std::variant<FieldToken, NoteToken, RestToken, MultiRestToken, BarToken, EndingToken,
                 TieToken, BrokenRhythmToken, TupletToken, ChordOpenToken, ChordCloseToken,
                 VoiceOverlayToken, IgnoredToken>;

struct AbcToken {
  TokenValue value;
  int line = 1;
  int column = 1;
};

// --- errors ---------------------------------------------------------------

enum class ErrorKind {
  lexical,
  missing_reference,
  missing_key,
  pitch_out_of_range,
  repeat_structure,
  multi_measure_rest,
  polyphonic,
  empty_tune,
  duration_overflow,
  unrepresentable,
};

/// Short machine-readable code, e.g. "missing-key".
std::string_view to_string(ErrorKind kind);

class AbcError : public std::runtime_error {
 public:
  AbcError(ErrorKind kind, const std::string& message, int line = 0, int column = 0);
  ErrorKind kind() const { return kind_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  ErrorKind kind_;
  int line_;
  int column_;
};

// --- operations -----------------------------------------------------------

std::vector<AbcToken> tokenize_abc(std::string_view source);

/// Parses exactly one tune. Repeats are expanded, ties merged, tuplets and
/// broken rhythms resolved, accidentals applied. Throws AbcError.
Score parse_tune(const std::vector<AbcToken>& tokens);

/// tokenize_abc + parse_tune.
Score parse_tune_text(std::string_view source);

struct SkipReport {
  int tune_ref = 0;
  std::string title;
  std::string reason;  // ErrorKind code
  std::string detail;
};

/// One JSON object per line: {"tune_ref", "title", "reason", "detail"}.
std::string to_json_line(const SkipReport& report);

struct CorpusParse {
  std::vector<Score> scores;
  std::vector<SkipReport> skipped;
};

/// Splits on X: fields and parses each tune; failures become skip reports.
CorpusParse parse_corpus(std::string_view source);

/// Writes a score as abc text. Events are reproduced exactly on re-parse.
/// Bar lines are placed greedily from the header meter for display only.
/// Throws AbcError(unrepresentable) when a duration has a denominator above 64.
std::string emit_abc(const Score& score);

}  // namespace folkgen::abc
