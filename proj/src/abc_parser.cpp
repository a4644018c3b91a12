#include <cctype>
#include <map>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "folkgen/abc.hpp"

namespace folkgen::abc {

namespace {

int letter_semitone(char upper) {
  switch (upper) {
    case 'C': return 0;
    case 'D': return 2;
    case 'E': return 4;
    case 'F': return 5;
    case 'G': return 7;
    case 'A': return 9;
    default: return 11;  // B
  }
}

int default_tuplet_q(int p, const std::optional<Meter>& meter) {
  switch (p) {
    case 2:
    case 4:
    case 8: return 3;
    case 3:
    case 6: return 2;
    default: return meter && meter->compound() ? 3 : 2;
  }
}

struct PendingEvent {
  NoteEvent event;
  bool tie_after = false;
};

class TuneParser {
 public:
  explicit TuneParser(const std::vector<AbcToken>& tokens) : tokens_(tokens) {}

  Score run() {
    if (tokens_.empty()) throw AbcError(ErrorKind::missing_reference, "tune has no X: field");
    const auto* first = std::get_if<FieldToken>(&tokens_.front().value);
    if (first == nullptr || first->key != 'X' || !first->reference) {
      throw AbcError(ErrorKind::missing_reference, "tune must start with an X: field",
                     tokens_.front().line, tokens_.front().column);
    }
    score_.header.reference_number = *first->reference;
    for (std::size_t i = 1; i < tokens_.size(); ++i) {
      current_ = &tokens_[i];
      std::visit([this](const auto& token) { handle(token); }, tokens_[i].value);
    }
    if (!in_body_) throw AbcError(ErrorKind::missing_key, "tune has no K: field");
    if (in_chord_) fail(ErrorKind::lexical, "unterminated chord");
    if (ending_ == 1) fail(ErrorKind::repeat_structure, "first ending never closed by :|");
    finish();
    return std::move(score_);
  }

 private:
  [[noreturn]] void fail(ErrorKind kind, const std::string& message) const {
    if (current_ != nullptr) throw AbcError(kind, message, current_->line, current_->column);
    throw AbcError(kind, message);
  }

  std::string bar_label() const { return "bar " + std::to_string(bar_number_ + 1); }

  void require_body() {
    if (!in_body_) fail(ErrorKind::missing_key, "music before the K: field");
  }

  void handle(const FieldToken& field) {
    switch (field.key) {
      case 'T':
        if (!in_body_ && score_.header.title.empty()) {
          auto title = field.value;
          while (!title.empty() && std::isspace(static_cast<unsigned char>(title.back()))) title.pop_back();
          const auto start = title.find_first_not_of(' ');
          score_.header.title = start == std::string::npos ? "" : title.substr(start);
        }
        break;
      case 'M':
        meter_ = field.meter;
        if (!in_body_) score_.header.meter = field.meter;
        break;
      case 'L':
        unit_ = *field.unit;
        unit_seen_ = true;
        if (!in_body_) score_.header.unit_note_length = *field.unit;
        break;
      case 'K':
        key_ = *field.key_signature;
        if (!in_body_) {
          // no L: field, the default depends on the meter
          if (!unit_seen_ && meter_ && !meter_->free && meter_->bar_length() < Rational(3, 4)) {
            unit_ = Rational(1, 16);
            score_.header.unit_note_length = unit_;
          }
          score_.header.key = key_;
          in_body_ = true;
        }
        break;
      case 'V': {
        auto id = field.value;
        const auto end = id.find_first_of(" \t");
        id = id.substr(0, end);
        if (!voice_) {
          voice_ = id;
        } else if (*voice_ != id) {
          fail(ErrorKind::polyphonic, "second voice '" + id + "' (only monophonic tunes are supported)");
        }
        break;
      }
      default: break;  // T: inside the body, w:, R:, C:, ...
    }
  }

  void handle(const NoteToken& token) {
    require_body();
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(token.letter)));
    const int octave = token.octave + (std::islower(static_cast<unsigned char>(token.letter)) ? 1 : 0);
    const auto slot = std::make_pair(upper, octave);
    int alteration = 0;
    if (token.accidental) {
      alteration = *token.accidental;
      bar_accidentals_[slot] = alteration;
    } else if (auto it = bar_accidentals_.find(slot); it != bar_accidentals_.end()) {
      alteration = it->second;
    } else {
      alteration = key_.alteration(upper);
    }
    const int pitch = 60 + 12 * octave + letter_semitone(upper) + alteration;
    if (pitch < kMinPitch || pitch > kMaxPitch) {
      fail(ErrorKind::pitch_out_of_range,
           "pitch " + std::to_string(pitch) + " outside [" + std::to_string(kMinPitch) + ", " +
               std::to_string(kMaxPitch) + "] in " + bar_label());
    }
    const Rational duration = token.length * unit_;
    if (in_chord_) {
      if (!chord_first_) chord_first_ = NoteEvent::note(pitch, duration);
      return;
    }
    add_event(NoteEvent::note(pitch, duration));
  }

  void handle(const RestToken& token) {
    require_body();
    if (in_chord_) return;
    add_event(NoteEvent::rest(token.length * unit_));
  }

  void handle(const MultiRestToken&) {
    require_body();
    fail(ErrorKind::multi_measure_rest, "multi-measure rests are not supported");
  }

  void handle(const ChordOpenToken&) {
    require_body();
    if (in_chord_) fail(ErrorKind::lexical, "nested chord");
    in_chord_ = true;
    chord_first_.reset();
  }

  void handle(const ChordCloseToken& token) {
    require_body();
    if (!in_chord_) fail(ErrorKind::lexical, "']' without an open chord");
    in_chord_ = false;
    if (!chord_first_) return;  // empty chord or rests only
    NoteEvent event = *chord_first_;
    event.duration *= token.length;
    chord_first_.reset();
    add_event(event);
  }

  void handle(const TieToken&) {
    if (in_chord_) return;
    if (!events_.empty()) events_.back().tie_after = true;
  }

  void handle(const BrokenRhythmToken& token) {
    require_body();
    if (events_.empty()) fail(ErrorKind::lexical, "broken rhythm without a preceding note");
    if (token.count > 3) fail(ErrorKind::lexical, "broken rhythm deeper than >>>");
    // a>b: a gets 2 - 2^-n of its length, b gets 2^-n.
    const Rational short_factor(1, std::int64_t{1} << token.count);
    const Rational long_factor = Rational(2) - short_factor;
    events_.back().event.duration *= token.first_long ? long_factor : short_factor;
    next_broken_ = token.first_long ? short_factor : long_factor;
  }

  void handle(const TupletToken& token) {
    require_body();
    const int q = token.q.value_or(default_tuplet_q(token.p, meter_));
    tuplet_factor_ = Rational(q, token.p);
    tuplet_remaining_ = token.r.value_or(token.p);
  }

  void handle(const BarToken& token) {
    if (!in_body_) return;
    bar_accidentals_.clear();
    ++bar_number_;
    switch (token.kind) {
      case BarKind::single: break;
      case BarKind::double_bar:
        if (ending_ == 1) fail(ErrorKind::repeat_structure, "first ending closed without :| at " + bar_label());
        section_start_ = events_.size();
        ending_ = 0;
        break;
      case BarKind::repeat_start:
        if (ending_ == 1) fail(ErrorKind::repeat_structure, "first ending closed without :| at " + bar_label());
        section_start_ = events_.size();
        ending_ = 0;
        break;
      case BarKind::repeat_end:
        repeat_end();
        break;
      case BarKind::repeat_both:
        repeat_end();
        section_start_ = events_.size();
        break;
    }
  }

  void handle(const EndingToken& token) {
    require_body();
    if (token.numbers.size() != 1) {
      fail(ErrorKind::repeat_structure, "multi-number endings are not supported at " + bar_label());
    }
    const int number = token.numbers.front();
    if (number == 1) {
      if (ending_ == 1) fail(ErrorKind::repeat_structure, "nested first ending at " + bar_label());
      ending_ = 1;
      first_ending_start_ = events_.size();
    } else if (number == 2) {
      if (!first_ending_done_) {
        fail(ErrorKind::repeat_structure, "second ending without a first ending at " + bar_label());
      }
      first_ending_done_ = false;
      ending_ = 2;
    } else {
      fail(ErrorKind::repeat_structure, "ending [" + std::to_string(number) + " at " + bar_label());
    }
  }

  void handle(const VoiceOverlayToken&) {
    fail(ErrorKind::polyphonic, "voice overlay '&' at " + bar_label());
  }

  void handle(const IgnoredToken&) {}

  void repeat_end() {
    if (ending_ == 2) fail(ErrorKind::repeat_structure, ":| inside a second ending at " + bar_label());
    const std::size_t end = ending_ == 1 ? first_ending_start_ : events_.size();
    if (end < section_start_) fail(ErrorKind::repeat_structure, "unresolvable repeat at " + bar_label());
    std::vector<PendingEvent> span(events_.begin() + static_cast<std::ptrdiff_t>(section_start_),
                                   events_.begin() + static_cast<std::ptrdiff_t>(end));
    if (span.empty()) fail(ErrorKind::repeat_structure, "empty repeat at " + bar_label());
    first_ending_done_ = ending_ == 1;
    events_.insert(events_.end(), span.begin(), span.end());
    ending_ = 0;
    section_start_ = events_.size();
  }

  void add_event(NoteEvent event) {
    if (tuplet_remaining_ > 0) {
      event.duration *= tuplet_factor_;
      --tuplet_remaining_;
    }
    if (next_broken_) {
      event.duration *= *next_broken_;
      next_broken_.reset();
    }
    events_.push_back(PendingEvent{event, false});
  }

  void finish() {
    for (const auto& pending : events_) {
      auto& out = score_.events;
      if (!out.empty() && merge_next_ && !out.back().is_rest() && !pending.event.is_rest() &&
          out.back().pitch == pending.event.pitch) {
        out.back().duration += pending.event.duration;
      } else {
        out.push_back(pending.event);
      }
      merge_next_ = pending.tie_after;
    }
    if (score_.events.empty()) throw AbcError(ErrorKind::empty_tune, "tune has no notes");
    for (const auto& event : score_.events) {
      if (!fits_32_bits(event.duration)) {
        throw AbcError(ErrorKind::duration_overflow, "duration " + to_string(event.duration) + " overflows");
      }
    }
  }

  const std::vector<AbcToken>& tokens_;
  const AbcToken* current_ = nullptr;
  Score score_;
  bool in_body_ = false;
  std::optional<Meter> meter_;
  Rational unit_{1, 8};
  bool unit_seen_ = false;
  KeySignature key_;
  std::optional<std::string> voice_;

  std::vector<PendingEvent> events_;
  std::map<std::pair<char, int>, int> bar_accidentals_;
  int bar_number_ = 0;

  bool in_chord_ = false;
  std::optional<NoteEvent> chord_first_;

  int tuplet_remaining_ = 0;
  Rational tuplet_factor_{1};
  std::optional<Rational> next_broken_;

  std::size_t section_start_ = 0;
  std::size_t first_ending_start_ = 0;
  int ending_ = 0;
  bool first_ending_done_ = false;
  bool merge_next_ = false;
};

}  // namespace

Score parse_tune(const std::vector<AbcToken>& tokens) { return TuneParser(tokens).run(); }

Score parse_tune_text(std::string_view source) { return parse_tune(tokenize_abc(source)); }

std::string to_json_line(const SkipReport& report) {
  nlohmann::json j{{"tune_ref", report.tune_ref},
                   {"title", report.title},
                   {"reason", report.reason},
                   {"detail", report.detail}};
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

CorpusParse parse_corpus(std::string_view source) {
  // Tune boundaries: lines starting with "X:".
  std::vector<std::string_view> chunks;
  std::size_t pos = 0;
  std::optional<std::size_t> tune_start;
  while (pos < source.size()) {
    auto end = source.find('\n', pos);
    if (end == std::string_view::npos) end = source.size();
    if (source.compare(pos, 2, "X:") == 0) {
      if (tune_start) chunks.push_back(source.substr(*tune_start, pos - *tune_start));
      tune_start = pos;
    }
    pos = end + 1;
  }
  if (tune_start) chunks.push_back(source.substr(*tune_start));

  CorpusParse result;
  for (const auto chunk : chunks) {
    SkipReport report;
    // Best-effort reference number and title for the skip report.
    {
      std::istringstream lines{std::string(chunk)};
      std::string line;
      while (std::getline(lines, line)) {
        if (line.starts_with("X:")) report.tune_ref = std::atoi(line.c_str() + 2);
        if (line.starts_with("T:") && report.title.empty()) {
          report.title = line.substr(2);
          while (!report.title.empty() && std::isspace(static_cast<unsigned char>(report.title.back()))) {
            report.title.pop_back();
          }
          if (!report.title.empty() && report.title.front() == ' ') report.title.erase(0, 1);
        }
        if (line.starts_with("K:")) break;
      }
    }
    try {
      result.scores.push_back(parse_tune_text(chunk));
    } catch (const AbcError& e) {
      report.reason = std::string(to_string(e.kind()));
      report.detail = e.what();
      result.skipped.push_back(std::move(report));
    } catch (const std::exception& e) {
      report.reason = "internal-error";
      report.detail = e.what();
      result.skipped.push_back(std::move(report));
    }
  }
  return result;
}

}  // namespace folkgen::abc
