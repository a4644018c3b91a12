#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "folkgen/representation.hpp"
#include "test_support.hpp"

namespace folkgen {
namespace {

using R = Rational;
using abc::KeySignature;
using abc::Mode;

std::vector<abc::Score> normalized_toy() {
  std::vector<abc::Score> out;
  for (const auto& s : testing::toy_scores()) out.push_back(normalize_score(s).score);
  return out;
}

TEST(Transpose, ShiftsTowardCOrA) {
  EXPECT_EQ(transposition_shift(KeySignature('C', 0, Mode::major)), 0);
  EXPECT_EQ(transposition_shift(KeySignature('D', 0, Mode::major)), -2);
  EXPECT_EQ(transposition_shift(KeySignature('G', 0, Mode::major)), 5);
  EXPECT_EQ(transposition_shift(KeySignature('F', 1, Mode::major)), -6);  // tie goes down
  EXPECT_EQ(transposition_shift(KeySignature('E', 0, Mode::minor)), 5);
  EXPECT_EQ(transposition_shift(KeySignature('A', 0, Mode::dorian)), 0);
  EXPECT_EQ(transposition_shift(KeySignature('D', 0, Mode::mixolydian)), -2);
  for (char letter : std::string("CDEFGAB")) {
    for (int acc = -1; acc <= 1; ++acc) {
      if (acc == 1 && letter != 'F' && letter != 'C') continue;  // more than 7 sharps
      if (acc == -1 && letter == 'F') continue;
      const int s = transposition_shift(KeySignature(letter, acc, Mode::major));
      EXPECT_GE(s, -6);
      EXPECT_LE(s, 5);
    }
  }
}

TEST(Transpose, KeepsRestsAndRewritesKey) {
  const auto s = testing::tune("D z F", "M:4/4\nL:1/8\nK:D\n");
  const auto t = transpose_to_c(s);
  EXPECT_EQ(testing::events_of(t), (testing::events_of(testing::tune("C z E"))));
  EXPECT_EQ(t.header.key, KeySignature('C', 0, Mode::major));
  EXPECT_EQ(transpose_to_c(testing::tune("E", "K:Em\n")).header.key, KeySignature('A', 0, Mode::minor));
}

TEST(Durations, ModalValueIsUnit) {
  const auto n = normalize_durations(testing::tune("A2 B2 c d e"));
  EXPECT_EQ(n.base, R(1, 8));
  EXPECT_EQ(n.tokens, (std::vector<R>{R(2), R(2), R(1), R(1), R(1)}));
}

TEST(Durations, TieGoesToSmallest) {
  const auto n = normalize_durations(testing::tune("A2 B2 c d"));
  EXPECT_EQ(n.base, R(1, 8));
  EXPECT_EQ(n.tokens.front(), R(2));
}

TEST(Vocabulary, OrderAndSpecials) {
  const auto v = testing::small_vocab();
  ASSERT_EQ(v.pitch_size(), 5u);
  EXPECT_EQ(v.pitch_at(0), PitchToken::pitch(60));
  EXPECT_EQ(v.silence_index(), 3);
  EXPECT_EQ(v.song_ending_index(), 4);
  EXPECT_EQ(v.pitch_at(4).to_string(), "end");
  EXPECT_EQ(v.unit_duration_index(), 1);
  EXPECT_EQ(v.duration_index(R(2)), 2);
  EXPECT_FALSE(v.duration_index(R(3)).has_value());
  EXPECT_THROW(Vocabulary({60}, {R(2)}).unit_duration_index(), std::exception);
}

TEST(Vocabulary, BuiltFromCorpus) {
  const auto scores = normalized_toy();
  const auto v = build_vocabulary(scores);
  EXPECT_TRUE(v.duration_index(R(1)).has_value());
  for (std::size_t i = 1; i + 2 < v.pitch_size(); ++i) EXPECT_LT(v.pitch_at(int(i - 1)), v.pitch_at(int(i)));
  EXPECT_THROW(build_vocabulary(std::span<const abc::Score>{}), std::invalid_argument);
}

TEST(Encode, AppendsEndingWithUnitDuration) {
  const auto v = testing::small_vocab();
  const auto s = normalize_score(testing::tune("C2 D z E"));
  const auto e = encode_song(s.score, v);
  EXPECT_EQ(e.pitches, (std::vector<int>{0, 1, 3, 2, 4}));
  EXPECT_EQ(e.durations, (std::vector<int>{2, 1, 1, 1, 1}));
  EXPECT_EQ(encode_prefix(s.score, v).size(), 4u);
}

TEST(Encode, ListsEveryUnknownToken) {
  const auto v = testing::small_vocab();
  const auto s = normalize_score(testing::tune("C D3 F G"));
  try {
    encode_song(s.score, v);
    FAIL();
  } catch (const OutOfVocabularyError& e) {
    EXPECT_EQ(e.tokens(), (std::vector<std::string>{"duration:3", "pitch:65", "pitch:67"}));
  }
}

TEST(Encode, DecodeInvertsEncode) {
  const auto scores = normalized_toy();
  const auto v = build_vocabulary(scores);
  for (const auto& s : scores) {
    const auto e = encode_song(s, v);
    EXPECT_EQ(decode_song(e, v).events, s.events);
  }
}

TEST(Encode, DecodeRestoresOriginal) {
  for (const auto& original : testing::toy_scores()) {
    const auto n = normalize_score(original);
    const std::vector<abc::Score> one{n.score};
    const auto v = build_vocabulary(one);
    const auto back = decode_song(encode_song(n.score, v), v, n.base, -n.shift);
    EXPECT_EQ(back.events, original.events) << original.header.title;
  }
}

TEST(Encode, RandomRoundTrip) {
  std::mt19937_64 rng(7);
  const std::vector<R> durations{R(1, 3), R(1, 2), R(1), R(3, 2), R(2), R(4)};
  std::vector<int> pitches;
  for (int p = 50; p < 80; ++p) pitches.push_back(p);
  const Vocabulary v(pitches, durations);
  for (int trial = 0; trial < 200; ++trial) {
    abc::Score s;
    const int len = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) {
      const R d = durations[rng() % durations.size()];
      if (rng() % 7 == 0) {
        s.events.push_back(abc::NoteEvent::rest(d));
      } else {
        s.events.push_back(abc::NoteEvent::note(50 + static_cast<int>(rng() % 30), d));
      }
    }
    EXPECT_EQ(decode_song(encode_song(s, v), v).events, s.events);
  }
}

TEST(Encode, DecodeRejectsBadInput) {
  const auto v = testing::small_vocab();
  EXPECT_THROW(decode_song(EncodedSong{{4}, {1}}, v), std::invalid_argument);
  EXPECT_THROW(decode_song(EncodedSong{{9, 4}, {1, 1}}, v), std::out_of_range);
}

TEST(Encode, OneHotMatrices) {
  const auto v = testing::small_vocab();
  const EncodedSong e{{0, 2, 4}, {1, 0, 1}};
  const auto p = pitch_matrix(e, v);
  const auto d = duration_matrix(e, v);
  ASSERT_EQ(p.rows(), 5);
  ASSERT_EQ(p.cols(), 3);
  ASSERT_EQ(d.rows(), 3);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(p.col(c).sum(), 1.0);
    EXPECT_EQ(d.col(c).sum(), 1.0);
  }
  EXPECT_EQ(p(2, 1), 1.0);
  EXPECT_EQ(d(0, 1), 1.0);
}

TEST(Transitions, RowsAreDistributions) {
  const auto scores = normalized_toy();
  const auto v = build_vocabulary(scores);
  std::vector<EncodedSong> songs;
  for (const auto& s : scores) songs.push_back(encode_song(s, v));
  for (auto which : {TokenStream::pitch, TokenStream::duration}) {
    const auto m = transition_stats(songs, v, which);
    for (Eigen::Index i = 0; i < m.probs.rows(); ++i) {
      if (m.observed[std::size_t(i)]) {
        EXPECT_NEAR(m.probs.row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(m.probs.row(i).minCoeff(), 0.0);
      } else {
        EXPECT_EQ(m.probs.row(i).sum(), 0.0);
      }
    }
  }
  // nothing follows the song ending
  const auto pm = transition_stats(songs, v, TokenStream::pitch);
  EXPECT_FALSE(pm.observed[std::size_t(v.song_ending_index())]);
}

TEST(Transitions, CountsByHand) {
  const auto v = testing::small_vocab();
  const std::vector<EncodedSong> songs{{{0, 1, 0, 4}, {1, 1, 2, 1}}, {{0, 0, 4}, {1, 1, 1}}};
  const auto m = transition_stats(songs, v, TokenStream::pitch);
  EXPECT_EQ(m.counts[0], 4.0);
  EXPECT_DOUBLE_EQ(m.probs(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(m.probs(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(m.probs(0, 4), 0.5);
  EXPECT_EQ(m.probs(1, 0), 1.0);
  const auto csv = to_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "from,60,62,64,silence,end");
}

TEST(Transitions, StatsReport) {
  const auto v = testing::small_vocab();
  const std::vector<EncodedSong> songs{{{0, 1, 0, 4}, {1, 1, 2, 1}}, {{0, 0, 4}, {1, 1, 1}}};
  const auto j = nlohmann::json::parse(stats_report_json(songs, v));
  EXPECT_EQ(j["num_songs"], 2);
  EXPECT_DOUBLE_EQ(j["mean_len"].get<double>(), 2.5);
  EXPECT_DOUBLE_EQ(j["std_len"].get<double>(), 0.5);
  EXPECT_EQ(j["duration_vocab"], (std::vector<std::string>{"1/2", "1", "2"}));
  EXPECT_TRUE(j["transition_matrices"].contains("pitch"));
}

TEST(Hash, SensitiveToOrder) {
  const EncodedSong a{{0, 1}, {1, 1}}, b{{1, 0}, {1, 1}};
  EXPECT_NE(song_hash(a), song_hash(b));
  EXPECT_EQ(song_hash(a), song_hash(EncodedSong{{0, 1}, {1, 1}}));
}

}  // namespace
}  // namespace folkgen
