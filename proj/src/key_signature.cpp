#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <stdexcept>
#include <string>

#include "folkgen/abc.hpp"

namespace folkgen::abc {

namespace {

int letter_fifths(char upper) {
  switch (upper) {
    case 'F': return -1;
    case 'C': return 0;
    case 'G': return 1;
    case 'D': return 2;
    case 'A': return 3;
    case 'E': return 4;
    case 'B': return 5;
    default: throw std::invalid_argument(std::string("not a note letter: ") + upper);
  }
}

int letter_semitone(char upper) {
  static constexpr std::array<int, 7> table{9, 11, 0, 2, 4, 5, 7};  // A..G
  return table.at(static_cast<std::size_t>(upper - 'A'));
}

int mode_offset(Mode mode) {
  switch (mode) {
    case Mode::major: return 0;
    case Mode::lydian: return 1;
    case Mode::mixolydian: return -1;
    case Mode::dorian: return -2;
    case Mode::minor:
    case Mode::aeolian: return -3;
    case Mode::phrygian: return -4;
    case Mode::locrian: return -5;
  }
  return 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int parse_positive(std::string_view text, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value <= 0) {
    throw std::invalid_argument("malformed meter '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::major: return "major";
    case Mode::minor: return "minor";
    case Mode::dorian: return "dorian";
    case Mode::phrygian: return "phrygian";
    case Mode::lydian: return "lydian";
    case Mode::mixolydian: return "mixolydian";
    case Mode::aeolian: return "aeolian";
    case Mode::locrian: return "locrian";
  }
  return "major";
}

KeySignature::KeySignature(char letter, int accidental, Mode mode)
    : letter_(static_cast<char>(std::toupper(static_cast<unsigned char>(letter)))),
      accidental_(accidental),
      mode_(mode) {
  if (letter_ < 'A' || letter_ > 'G') throw std::invalid_argument("tonic must be A..G");
  if (accidental < -1 || accidental > 1) throw std::invalid_argument("tonic accidental out of range");
  if (sharps() < -7 || sharps() > 7) {
    throw std::invalid_argument("key " + to_string() + " needs more than 7 accidentals");
  }
}

int KeySignature::tonic_pitch_class() const {
  return ((letter_semitone(letter_) + accidental_) % 12 + 12) % 12;
}

int KeySignature::sharps() const {
  return letter_fifths(letter_) + 7 * accidental_ + mode_offset(mode_);
}

int KeySignature::alteration(char letter) const {
  static constexpr std::string_view sharp_order = "FCGDAEB";
  static constexpr std::string_view flat_order = "BEADGCF";
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
  const int n = sharps();
  if (n > 0 && sharp_order.substr(0, static_cast<std::size_t>(n)).find(upper) != std::string_view::npos) {
    return 1;
  }
  if (n < 0 && flat_order.substr(0, static_cast<std::size_t>(-n)).find(upper) != std::string_view::npos) {
    return -1;
  }
  return 0;
}

bool KeySignature::major_family() const {
  return mode_ == Mode::major || mode_ == Mode::lydian || mode_ == Mode::mixolydian;
}

std::string KeySignature::to_string() const {
  std::string out(1, letter_);
  if (accidental_ > 0) out += '#';
  if (accidental_ < 0) out += 'b';
  switch (mode_) {
    case Mode::major: break;
    case Mode::minor: out += "min"; break;
    case Mode::dorian: out += "dor"; break;
    case Mode::phrygian: out += "phr"; break;
    case Mode::lydian: out += "lyd"; break;
    case Mode::mixolydian: out += "mix"; break;
    case Mode::aeolian: out += "aeo"; break;
    case Mode::locrian: out += "loc"; break;
  }
  return out;
}

KeySignature KeySignature::parse(std::string_view text) {
  const auto value = trim(text);
  if (value.empty() || lower(value.substr(0, 4)) == "none") return KeySignature{};
  const char letter = value.front();
  if (letter < 'A' || letter > 'G') {
    throw std::invalid_argument("unsupported key '" + std::string(value) + "'");
  }
  std::size_t pos = 1;
  int accidental = 0;
  if (pos < value.size() && (value[pos] == '#' || value[pos] == 'b')) {
    accidental = value[pos] == '#' ? 1 : -1;
    ++pos;
  }
  while (pos < value.size() && value[pos] == ' ') ++pos;
  std::size_t end = pos;
  while (end < value.size() && std::isalpha(static_cast<unsigned char>(value[end]))) ++end;
  const std::string word = lower(value.substr(pos, end - pos));
  Mode mode = Mode::major;
  // Anything that is not a recognised mode word (clef=, exp, ...) is ignored.
  if (end < value.size() && value[end] == '=') {
    // e.g. "clef=treble"
  } else if (word == "m" || word.starts_with("min")) {
    mode = Mode::minor;
  } else if (word.size() >= 3) {
    const auto prefix = word.substr(0, 3);
    if (prefix == "maj" || prefix == "ion") mode = Mode::major;
    else if (prefix == "aeo") mode = Mode::aeolian;
    else if (prefix == "dor") mode = Mode::dorian;
    else if (prefix == "phr") mode = Mode::phrygian;
    else if (prefix == "lyd") mode = Mode::lydian;
    else if (prefix == "mix") mode = Mode::mixolydian;
    else if (prefix == "loc") mode = Mode::locrian;
  }
  return KeySignature(letter, accidental, mode);
}

bool Meter::compound() const {
  return !free && denominator == 8 && numerator % 3 == 0 && numerator > 3;
}

std::string Meter::to_string() const {
  if (free) return "none";
  return std::to_string(numerator) + "/" + std::to_string(denominator);
}

Meter Meter::parse(std::string_view text) {
  const auto value = trim(text);
  if (value.empty() || lower(value) == "none") return Meter{4, 4, true};
  if (value == "C") return Meter{4, 4, false};
  if (value == "C|") return Meter{2, 2, false};
  const auto slash = value.find('/');
  if (slash == std::string_view::npos) {
    throw std::invalid_argument("malformed meter '" + std::string(value) + "'");
  }
  // Additive numerators such as 2+3/8.
  int numerator = 0;
  auto num_text = trim(value.substr(0, slash));
  if (num_text.size() >= 2 && num_text.front() == '(' && num_text.back() == ')') {
    num_text = num_text.substr(1, num_text.size() - 2);
  }
  while (!num_text.empty()) {
    const auto plus = num_text.find('+');
    numerator += parse_positive(trim(num_text.substr(0, plus)), value);
    if (plus == std::string_view::npos) break;
    num_text = num_text.substr(plus + 1);
  }
  const int denominator = parse_positive(trim(value.substr(slash + 1)), value);
  if (numerator <= 0) throw std::invalid_argument("malformed meter '" + std::string(value) + "'");
  return Meter{numerator, denominator, false};
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::lexical: return "lexical-error";
    case ErrorKind::missing_reference: return "missing-reference";
    case ErrorKind::missing_key: return "missing-key";
    case ErrorKind::pitch_out_of_range: return "pitch-out-of-range";
    case ErrorKind::repeat_structure: return "repeat-structure";
    case ErrorKind::multi_measure_rest: return "multi-measure-rest";
    case ErrorKind::polyphonic: return "polyphonic";
    case ErrorKind::empty_tune: return "empty-tune";
    case ErrorKind::duration_overflow: return "duration-overflow";
    case ErrorKind::unrepresentable: return "unrepresentable";
  }
  return "unknown";
}

AbcError::AbcError(ErrorKind kind, const std::string& message, int line, int column)
    : std::runtime_error(line > 0 ? message + " (line " + std::to_string(line) + ", column " +
                                        std::to_string(column) + ")"
                                  : message),
      kind_(kind),
      line_(line),
      column_(column) {}

}  // namespace folkgen::abc
