#include <cctype>
#include <charconv>
#include <string>

#include "folkgen/abc.hpp"

namespace folkgen::abc {

namespace {

bool is_note_letter(char c) { return (c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g'); }

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_field_line(std::string_view line) {
  return line.size() >= 2 && line[1] == ':' &&
         (std::isalpha(static_cast<unsigned char>(line[0])) || line[0] == '+');
}

class LineLexer {
 public:
  LineLexer(std::string_view text, int line, std::vector<AbcToken>& out)
      : text_(text), line_(line), out_(out) {}

  void run() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      const std::size_t start = pos_;
      if (c == '%') return;
      if (c == ' ' || c == '\t' || c == '`' || c == '\\' || c == '$' || c == '\r') {
        ++pos_;
      } else if (c == '"') {
        skip_delimited('"', "unterminated quoted string", true);
      } else if (c == '!' || c == '+') {
        skip_delimited(c, "", false);
      } else if (c == '{') {
        skip_delimited('}', "unterminated grace-note group", true);
      } else if (c == '[') {
        lex_open_bracket();
      } else if (c == ']') {
        ++pos_;
        emit(start, ChordCloseToken{lex_length()});
      } else if (c == '|' || c == ':') {
        lex_bar();
      } else if (c == '-') {
        ++pos_;
        emit(start, TieToken{});
      } else if (c == '>' || c == '<') {
        int count = 0;
        while (pos_ < text_.size() && text_[pos_] == c) {
          ++pos_;
          ++count;
        }
        emit(start, BrokenRhythmToken{c == '>', count});
      } else if (c == '(') {
        lex_paren();
      } else if (c == '^' || c == '_' || c == '=' || is_note_letter(c)) {
        lex_note();
      } else if (c == 'z' || c == 'x') {
        ++pos_;
        emit(start, RestToken{c == 'x', lex_length()});
      } else if (c == 'Z' || c == 'X') {
        ++pos_;
        int measures = 1;
        if (pos_ < text_.size() && is_digit(text_[pos_])) measures = lex_int();
        emit(start, MultiRestToken{measures});
      } else if (c == '&') {
        ++pos_;
        emit(start, VoiceOverlayToken{});
      } else {
        // decorations (~ . H..W h..w), spacer y, slur close, stray symbols
        ++pos_;
        emit(start, IgnoredToken{std::string(1, c)});
      }
    }
  }

 private:
  template <class T>
  void emit(std::size_t start, T value) {
    out_.push_back(AbcToken{TokenValue{std::move(value)}, line_, static_cast<int>(start) + 1});
  }

  [[noreturn]] void fail(const std::string& message, std::size_t at) const {
    throw AbcError(ErrorKind::lexical, message, line_, static_cast<int>(at) + 1);
  }

  int lex_int() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    if (pos_ - start > 6) fail("number too long", start);
    int value = 0;
    std::from_chars(text_.data() + start, text_.data() + pos_, value);
    return value;
  }

  Rational lex_length() {
    std::int64_t num = 1;
    std::int64_t den = 1;
    if (pos_ < text_.size() && is_digit(text_[pos_])) num = lex_int();
    int slashes = 0;
    while (pos_ < text_.size() && text_[pos_] == '/') {
      ++pos_;
      ++slashes;
    }
    if (slashes > 0) {
      if (slashes > 8) fail("too many '/' in note length", pos_);
      if (pos_ < text_.size() && is_digit(text_[pos_])) {
        den = static_cast<std::int64_t>(lex_int()) << (slashes - 1);
      } else {
        den = std::int64_t{1} << slashes;
      }
    }
    if (num == 0 || den == 0) fail("zero note length", pos_);
    return Rational(num, den);
  }

  void skip_delimited(char close, const char* error, bool required) {
    const std::size_t start = pos_;
    const auto end = text_.find(close, pos_ + 1);
    if (end == std::string_view::npos) {
      if (required) fail(error, start);
      ++pos_;
      emit(start, IgnoredToken{std::string(1, text_[start])});
      return;
    }
    pos_ = end + 1;
    emit(start, IgnoredToken{std::string(text_.substr(start, pos_ - start))});
  }

  void lex_open_bracket() {
    const std::size_t start = pos_;
    const char next = pos_ + 1 < text_.size() ? text_[pos_ + 1] : '\0';
    if (next == '|') {
      lex_bar();
      return;
    }
    if (is_digit(next)) {
      ++pos_;
      lex_ending(start);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(next)) && pos_ + 2 < text_.size() &&
        text_[pos_ + 2] == ':') {
      const auto close = text_.find(']', pos_);
      if (close == std::string_view::npos) fail("unterminated inline field", start);
      const auto body = text_.substr(pos_ + 3, close - pos_ - 3);
      pos_ = close + 1;
      out_.push_back(make_field(next, body, true, line_, static_cast<int>(start) + 1));
      return;
    }
    ++pos_;
    emit(start, ChordOpenToken{});
  }

  void lex_ending(std::size_t start) {
    EndingToken ending;
    ending.numbers.push_back(lex_int());
    while (pos_ + 1 < text_.size() && (text_[pos_] == ',' || text_[pos_] == '-') &&
           is_digit(text_[pos_ + 1])) {
      const bool range = text_[pos_] == '-';
      ++pos_;
      const int value = lex_int();
      if (range) {
        for (int n = ending.numbers.back() + 1; n <= value && n < 100; ++n) ending.numbers.push_back(n);
      } else {
        ending.numbers.push_back(value);
      }
    }
    emit(start, std::move(ending));
  }

  void lex_bar() {
    const std::size_t start = pos_;
    std::string run;
    if (text_[pos_] == '[') {
      run += '[';
      ++pos_;
    }
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '|' || c == ':') {
        run += c;
        ++pos_;
      } else if (c == ']' && !run.empty() && run.back() == '|') {
        run += c;
        ++pos_;
      } else {
        break;
      }
    }
    const bool has_pipe = run.find('|') != std::string::npos;
    const auto first = run.find_first_not_of('[');
    const bool leading = first != std::string::npos && run[first] == ':';
    const bool trailing = run.back() == ':';
    if (!has_pipe && run != "::") {
      emit(start, IgnoredToken{run});
      return;
    }
    BarKind kind = BarKind::single;
    if ((leading && trailing) || run == "::") kind = BarKind::repeat_both;
    else if (leading) kind = BarKind::repeat_end;
    else if (trailing) kind = BarKind::repeat_start;
    else if (run.size() > 1) kind = BarKind::double_bar;
    emit(start, BarToken{kind});
    if (pos_ < text_.size() && is_digit(text_[pos_])) lex_ending(pos_);
  }

  void lex_paren() {
    const std::size_t start = pos_;
    ++pos_;
    if (pos_ >= text_.size() || !is_digit(text_[pos_])) {
      emit(start, IgnoredToken{"("});
      return;
    }
    TupletToken tuplet;
    tuplet.p = lex_int();
    if (tuplet.p < 2 || tuplet.p > 9) fail("unsupported tuplet (" + std::to_string(tuplet.p), start);
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      if (pos_ < text_.size() && is_digit(text_[pos_])) tuplet.q = lex_int();
      if (pos_ < text_.size() && text_[pos_] == ':') {
        ++pos_;
        if (pos_ < text_.size() && is_digit(text_[pos_])) tuplet.r = lex_int();
      }
    }
    if ((tuplet.q && *tuplet.q == 0) || (tuplet.r && *tuplet.r == 0)) fail("zero in tuplet", start);
    emit(start, tuplet);
  }

  void lex_note() {
    const std::size_t start = pos_;
    NoteToken note;
    if (text_[pos_] == '^' || text_[pos_] == '_' || text_[pos_] == '=') {
      const char symbol = text_[pos_];
      int count = 0;
      while (pos_ < text_.size() && text_[pos_] == symbol && count < 2) {
        ++pos_;
        ++count;
      }
      if (symbol == '=') {
        note.accidental = 0;
      } else {
        note.accidental = symbol == '^' ? count : -count;
      }
      if (pos_ < text_.size() && text_[pos_] == '/') {
        fail("microtonal accidentals are not supported", start);
      }
    }
    if (pos_ >= text_.size() || !is_note_letter(text_[pos_])) {
      fail("accidental without a note letter", start);
    }
    note.letter = text_[pos_++];
    while (pos_ < text_.size() && (text_[pos_] == '\'' || text_[pos_] == ',')) {
      note.octave += text_[pos_] == '\'' ? 1 : -1;
      ++pos_;
    }
    note.length = lex_length();
    emit(start, note);
  }

 public:
  static AbcToken make_field(char key, std::string_view raw, bool inline_field, int line,
                             int column) {
    FieldToken field;
    field.key = key;
    const auto comment = raw.find('%');
    field.value = std::string(raw.substr(0, comment));
    field.inline_field = inline_field;
    try {
      switch (key) {
        case 'K': field.key_signature = KeySignature::parse(field.value); break;
        case 'M': field.meter = Meter::parse(field.value); break;
        case 'L': {
          auto text = field.value;
          std::erase_if(text, [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); });
          const Rational unit = parse_rational(text);
          if (unit <= 0) throw std::invalid_argument("unit note length must be positive");
          field.unit = unit;
          break;
        }
        case 'X': {
          auto text = field.value;
          std::erase_if(text, [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); });
          int value = 0;
          auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
          if (ec != std::errc{} || ptr != text.data() + text.size()) {
            throw std::invalid_argument("malformed reference number '" + field.value + "'");
          }
          field.reference = value;
          break;
        }
        default: break;
      }
    } catch (const std::invalid_argument& e) {
      throw AbcError(ErrorKind::lexical, std::string("malformed ") + key + ": field: " + e.what(),
                     line, column);
    }
    return AbcToken{TokenValue{std::move(field)}, line, column};
  }

 private:
  std::string_view text_;
  int line_;
  std::vector<AbcToken>& out_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<AbcToken> tokenize_abc(std::string_view source) {
  std::vector<AbcToken> tokens;
  int line_number = 0;
  std::size_t start = 0;
  while (start <= source.size()) {
    auto end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    auto line = source.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_number;
    if (is_field_line(line)) {
      tokens.push_back(LineLexer::make_field(line[0], line.substr(2), false, line_number, 3));
    } else if (!line.empty()) {
      LineLexer(line, line_number, tokens).run();
    }
    if (end == source.size()) break;
    start = end + 1;
  }
  return tokens;
}

}  // namespace folkgen::abc
