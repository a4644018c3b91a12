#include <gtest/gtest.h>

#include "folkgen/abc.hpp"
#include "test_support.hpp"

namespace folkgen {
namespace {

using abc::ErrorKind;
using testing::events_of;
using testing::tune;
using R = Rational;
using Ev = std::vector<std::pair<int, Rational>>;

ErrorKind kind_of(const std::string& text) {
  try {
    abc::parse_tune_text(text);
  } catch (const abc::AbcError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return ErrorKind::lexical;
}

TEST(Rational, ParseAndPrint) {
  EXPECT_EQ(parse_rational("3/2"), R(3, 2));
  EXPECT_EQ(parse_rational("/4"), R(1, 4));
  EXPECT_EQ(parse_rational("2"), R(2));
  EXPECT_EQ(to_string(R(6, 4)), "3/2");
  EXPECT_EQ(to_string(R(4, 2)), "2");
  EXPECT_THROW(parse_rational("1/0"), std::invalid_argument);
  EXPECT_THROW(parse_rational("x"), std::invalid_argument);
  EXPECT_TRUE(fits_32_bits(R(1, 3)));
  EXPECT_FALSE(fits_32_bits(R(std::int64_t{1} << 40)));
}

TEST(Lexer, NoteToken) {
  const auto tokens = abc::tokenize_abc("^c'3/2");
  ASSERT_EQ(tokens.size(), 1u);
  const auto& n = std::get<abc::NoteToken>(tokens[0].value);
  EXPECT_EQ(n.letter, 'c');
  EXPECT_EQ(n.accidental, 1);
  EXPECT_EQ(n.octave, 1);
  EXPECT_EQ(n.length, R(3, 2));
}

TEST(Lexer, BarsAndTuplets) {
  const auto tokens = abc::tokenize_abc("|: (3abc :|");
  ASSERT_EQ(tokens.size(), 6u);
  EXPECT_EQ(std::get<abc::BarToken>(tokens[0].value).kind, abc::BarKind::repeat_start);
  EXPECT_EQ(std::get<abc::TupletToken>(tokens[1].value).p, 3);
  EXPECT_EQ(std::get<abc::BarToken>(tokens[5].value).kind, abc::BarKind::repeat_end);
}

TEST(Lexer, PositionsAreOneBased) {
  const auto tokens = abc::tokenize_abc("X:1\nK:C\n  A");
  ASSERT_FALSE(tokens.empty());
  EXPECT_EQ(tokens.back().line, 3);
  EXPECT_EQ(tokens.back().column, 3);
}

TEST(Key, Signatures) {
  using abc::KeySignature;
  EXPECT_EQ(KeySignature::parse("D").sharps(), 2);
  EXPECT_EQ(KeySignature::parse("Bb").sharps(), -2);
  EXPECT_EQ(KeySignature::parse("F#m").sharps(), 3);
  EXPECT_EQ(KeySignature::parse("Ador").sharps(), 1);
  EXPECT_EQ(KeySignature::parse("Dmix").sharps(), 1);
  EXPECT_EQ(KeySignature::parse("Ador").tonic_pitch_class(), 9);
  EXPECT_EQ(KeySignature::parse("G").alteration('F'), 1);
  EXPECT_EQ(KeySignature::parse("Em").to_string(), "Emin");
  EXPECT_THROW(KeySignature::parse("H"), std::invalid_argument);
}

TEST(Parser, PitchesAndOctaves) {
  const auto s = tune("C c C, c' B,, z");
  EXPECT_EQ(events_of(s), (Ev{{60, R(1, 8)}, {72, R(1, 8)}, {48, R(1, 8)}, {84, R(1, 8)}, {47, R(1, 8)}, {-1, R(1, 8)}}));
}

TEST(Parser, AccidentalsLastForTheBar) {
  const auto s = tune("^F F | F =F", "M:4/4\nL:1/8\nK:D\n");
  EXPECT_EQ(events_of(s), (Ev{{66, R(1, 8)}, {66, R(1, 8)}, {66, R(1, 8)}, {65, R(1, 8)}}));
  const auto c = tune("^F F | F");
  EXPECT_EQ(events_of(c), (Ev{{66, R(1, 8)}, {66, R(1, 8)}, {65, R(1, 8)}}));
}

TEST(Parser, Lengths) {
  const auto s = tune("A2 A/ A3/2 A//");
  EXPECT_EQ(events_of(s), (Ev{{69, R(1, 4)}, {69, R(1, 16)}, {69, R(3, 16)}, {69, R(1, 32)}}));
}

TEST(Parser, DefaultUnitFollowsMeter) {
  EXPECT_EQ(abc::parse_tune_text("X:1\nM:2/4\nK:C\nA\n").events[0].duration, R(1, 16));
  EXPECT_EQ(abc::parse_tune_text("X:1\nM:3/4\nK:C\nA\n").events[0].duration, R(1, 8));
  EXPECT_EQ(abc::parse_tune_text("X:1\nK:C\nA\n").events[0].duration, R(1, 8));
}

TEST(Parser, TiesMerge) {
  const auto s = tune("A2-A B");
  EXPECT_EQ(events_of(s), (Ev{{69, R(3, 8)}, {71, R(1, 8)}}));
}

TEST(Parser, Triplets) {
  const auto s = tune("(3ABc d");
  EXPECT_EQ(events_of(s), (Ev{{69, R(1, 12)}, {71, R(1, 12)}, {72, R(1, 12)}, {74, R(1, 8)}}));
}

TEST(Parser, BrokenRhythm) {
  EXPECT_EQ(events_of(tune("A>B")), (Ev{{69, R(3, 16)}, {71, R(1, 16)}}));
  EXPECT_EQ(events_of(tune("A<B")), (Ev{{69, R(1, 16)}, {71, R(3, 16)}}));
}

TEST(Parser, RepeatsAndEndings) {
  EXPECT_EQ(events_of(tune("|:A B:| c")),
            (Ev{{69, R(1, 8)}, {71, R(1, 8)}, {69, R(1, 8)}, {71, R(1, 8)}, {72, R(1, 8)}}));
  EXPECT_EQ(events_of(tune("|:A |1 B :|2 c |]")),
            (Ev{{69, R(1, 8)}, {71, R(1, 8)}, {69, R(1, 8)}, {72, R(1, 8)}}));
  // a lone :| repeats from the start
  EXPECT_EQ(events_of(tune("A B :|")), (Ev{{69, R(1, 8)}, {71, R(1, 8)}, {69, R(1, 8)}, {71, R(1, 8)}}));
}

TEST(Parser, ChordsAndGraces) {
  EXPECT_EQ(events_of(tune("[CEG]2 {g}A")), (Ev{{60, R(1, 4)}, {69, R(1, 8)}}));
}

TEST(Parser, IgnoresDecorationsAndChordSymbols) {
  EXPECT_EQ(events_of(tune("\"Am\"~A !trill!B .c")), (Ev{{69, R(1, 8)}, {71, R(1, 8)}, {72, R(1, 8)}}));
}

TEST(Parser, HeaderFields) {
  const auto s = abc::parse_tune_text("X:7\nT:  Title  \nM:6/8\nL:1/4\nK:Em\nE\n");
  EXPECT_EQ(s.header.reference_number, 7);
  EXPECT_EQ(s.header.title, "Title");
  ASSERT_TRUE(s.header.meter);
  EXPECT_TRUE(s.header.meter->compound());
  EXPECT_EQ(s.header.unit_note_length, R(1, 4));
  EXPECT_EQ(s.header.key, abc::KeySignature('E', 0, abc::Mode::minor));
}

TEST(Parser, Errors) {
  EXPECT_EQ(kind_of("X:1\nT:no key\nABC\n"), ErrorKind::missing_key);
  EXPECT_EQ(kind_of("T:no ref\nK:C\nABC\n"), ErrorKind::missing_reference);
  EXPECT_EQ(kind_of("X:1\nK:C\nV:1\nA\nV:2\nB\n"), ErrorKind::polyphonic);
  EXPECT_EQ(kind_of("X:1\nK:C\nA & B\n"), ErrorKind::polyphonic);
  EXPECT_EQ(kind_of("X:1\nK:C\nZ4\n"), ErrorKind::multi_measure_rest);
  EXPECT_EQ(kind_of("X:1\nK:C\n|1 A :|\n"), ErrorKind::repeat_structure);
  EXPECT_EQ(kind_of("X:1\nK:C\n"), ErrorKind::empty_tune);
  EXPECT_EQ(kind_of("X:1\nK:C\nc''''''\n"), ErrorKind::pitch_out_of_range);
}

TEST(Parser, ErrorCarriesPosition) {
  try {
    abc::parse_tune_text("X:1\nK:C\nAB c''''''\n");
    FAIL();
  } catch (const abc::AbcError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_GT(e.column(), 1);
  }
}

TEST(Corpus, SplitsOnReferenceAndReportsSkips) {
  const auto parsed = abc::parse_corpus("X:1\nK:C\nA\n\nX:2\nT:bad\nA\n\nX:3\nK:G\nB\n");
  EXPECT_EQ(parsed.scores.size(), 2u);
  ASSERT_EQ(parsed.skipped.size(), 1u);
  EXPECT_EQ(parsed.skipped[0].tune_ref, 2);
  EXPECT_EQ(parsed.skipped[0].title, "bad");
  EXPECT_EQ(parsed.skipped[0].reason, "missing-key");
  const auto line = abc::to_json_line(parsed.skipped[0]);
  EXPECT_NE(line.find("\"tune_ref\":2"), std::string::npos);
  EXPECT_NE(line.find("\"reason\":\"missing-key\""), std::string::npos);
}

TEST(Corpus, ToyFixtureParsesCompletely) {
  const auto parsed = abc::parse_corpus(testing::read_fixture("toy_corpus.abc"));
  EXPECT_EQ(parsed.scores.size(), 20u);
  EXPECT_TRUE(parsed.skipped.empty());
}

TEST(Corpus, BrotherJohn) {
  const auto s = abc::parse_tune_text(testing::read_fixture("brother_john.abc"));
  ASSERT_EQ(s.events.size(), 32u);
  EXPECT_EQ(events_of(s).front(), (std::pair<int, Rational>{60, R(1, 4)}));
  EXPECT_EQ(s.events[10].duration, R(1, 2));  // G2
  EXPECT_EQ(s.events[14].duration, R(1, 8));  // G/
  EXPECT_EQ(s.events[27].pitch, 55);          // G,
}

TEST(Emit, RoundTripsFixtures) {
  auto scores = testing::toy_scores();
  scores.push_back(abc::parse_tune_text(testing::read_fixture("brother_john.abc")));
  for (const auto& s : scores) {
    const auto text = abc::emit_abc(s);
    const auto again = abc::parse_tune_text(text);
    EXPECT_EQ(again.events, s.events) << text;
    EXPECT_EQ(again.header.key, s.header.key);
  }
}

TEST(Emit, SpellsOutOfKeyNotes) {
  abc::Score s;
  s.header.key = abc::KeySignature('D', 0, abc::Mode::major);
  s.events = {abc::NoteEvent::note(65, R(1, 8)), abc::NoteEvent::note(65, R(1, 8)), abc::NoteEvent::note(66, R(1, 8)),
              abc::NoteEvent::rest(R(3, 8)), abc::NoteEvent::note(61, R(1, 24))};
  EXPECT_EQ(abc::parse_tune_text(abc::emit_abc(s)).events, s.events);
}

TEST(Emit, RejectsFineDurations) {
  abc::Score s;
  s.events = {abc::NoteEvent::note(60, R(1, 128))};
  try {
    abc::emit_abc(s);
    FAIL();
  } catch (const abc::AbcError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unrepresentable);
  }
}

}  // namespace
}  // namespace folkgen
