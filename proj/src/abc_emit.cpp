#include <array>
#include <cctype>
#include <map>
#include <string>

#include "folkgen/abc.hpp"

namespace folkgen::abc {

namespace {

constexpr std::array<char, 7> kLetters{'C', 'D', 'E', 'F', 'G', 'A', 'B'};
constexpr std::array<int, 7> kLetterSemitones{0, 2, 4, 5, 7, 9, 11};
constexpr std::int64_t kMaxDenominator = 64;

int mod12(int v) { return ((v % 12) + 12) % 12; }

struct Spelling {
  std::size_t letter;  // index into kLetters
  int alteration;
};

Spelling spell(int pitch, const KeySignature& key) {
  const int pc = mod12(pitch);
  for (std::size_t i = 0; i < kLetters.size(); ++i) {
    const int alt = key.alteration(kLetters[i]);
    if (mod12(kLetterSemitones[i] + alt) == pc) return {i, alt};
  }
  for (std::size_t i = 0; i < kLetters.size(); ++i) {
    if (kLetterSemitones[i] == pc) return {i, 0};
  }
  const int alt = key.sharps() >= 0 ? 1 : -1;
  for (std::size_t i = 0; i < kLetters.size(); ++i) {
    if (mod12(kLetterSemitones[i] + alt) == pc) return {i, alt};
  }
  return {0, 0};  // unreachable: every pitch class has a sharp and a flat spelling
}

std::string format_length(const Rational& multiplier) {
  if (multiplier == Rational(1)) return "";
  if (multiplier.denominator() == 1) return std::to_string(multiplier.numerator());
  std::string out = multiplier.numerator() == 1 ? "" : std::to_string(multiplier.numerator());
  return out + "/" + std::to_string(multiplier.denominator());
}

std::string accidental_symbol(int alteration) {
  switch (alteration) {
    case -2: return "__";
    case -1: return "_";
    case 0: return "=";
    case 1: return "^";
    case 2: return "^^";
    default: return "";
  }
}

}  // namespace

std::string emit_abc(const Score& score) {
  const auto& header = score.header;
  for (const auto& event : score.events) {
    if (event.duration <= 0 || event.duration.denominator() > kMaxDenominator) {
      throw AbcError(ErrorKind::unrepresentable,
                     "duration " + to_string(event.duration) + " needs a denominator above 64");
    }
    if (!event.is_rest() && (event.pitch < kMinPitch || event.pitch > kMaxPitch)) {
      throw AbcError(ErrorKind::unrepresentable, "pitch " + std::to_string(event.pitch) + " out of range");
    }
  }

  std::string out;
  out += "X:" + std::to_string(header.reference_number) + "\n";
  if (!header.title.empty()) out += "T:" + header.title + "\n";
  if (header.meter) out += "M:" + header.meter->to_string() + "\n";
  out += "L:" + to_string(header.unit_note_length) + "\n";
  out += "K:" + header.key.to_string() + "\n";

  const Rational bar_length =
      header.meter && !header.meter->free ? header.meter->bar_length() : Rational(1);
  std::map<std::pair<std::size_t, int>, int> bar_state;
  Rational in_bar{0};
  int bars_on_line = 0;
  bool line_empty = true;

  for (const auto& event : score.events) {
    if (!line_empty) out += ' ';
    line_empty = false;
    const std::string length = format_length(event.duration / header.unit_note_length);
    if (event.is_rest()) {
      out += "z" + length;
    } else {
      const auto [letter, alteration] = spell(event.pitch, header.key);
      const int natural = event.pitch - alteration;
      const int octave = (natural - 60 - kLetterSemitones[letter]) / 12;
      const auto slot = std::make_pair(letter, octave);
      const auto it = bar_state.find(slot);
      const int in_effect = it != bar_state.end() ? it->second : header.key.alteration(kLetters[letter]);
      if (in_effect != alteration) {
        out += accidental_symbol(alteration);
        bar_state[slot] = alteration;
      }
      if (octave >= 1) {
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(kLetters[letter])));
        out.append(static_cast<std::size_t>(octave - 1), '\'');
      } else {
        out += kLetters[letter];
        out.append(static_cast<std::size_t>(-octave), ',');
      }
      out += length;
    }
    in_bar += event.duration;
    if (in_bar >= bar_length) {
      while (in_bar >= bar_length) in_bar -= bar_length;
      out += " |";
      bar_state.clear();
      if (++bars_on_line == 4) {
        out += '\n';
        bars_on_line = 0;
        line_empty = true;
      }
    }
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  if (out.ends_with("|")) out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  out += " |]\n";
  return out;
}

}  // namespace folkgen::abc
