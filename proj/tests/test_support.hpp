#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "folkgen/abc.hpp"
#include "folkgen/representation.hpp"

namespace folkgen::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(FOLKGEN_FIXTURES) / name;
}

inline std::string read_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name), std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<abc::Score> toy_scores() { return abc::parse_corpus(read_fixture("toy_corpus.abc")).scores; }

inline abc::Score tune(const std::string& body, const std::string& header = "M:4/4\nL:1/8\nK:C\n") {
  return abc::parse_tune_text("X:1\nT:t\n" + header + body + "\n");
}

inline std::vector<std::pair<int, Rational>> events_of(const abc::Score& s) {
  std::vector<std::pair<int, Rational>> out;
  for (const auto& e : s.events) out.emplace_back(e.is_rest() ? -1 : e.pitch, e.duration);
  return out;
}

// pitches 60 62 64 (+ silence, end), durations 1/2 1 2
inline Vocabulary small_vocab() {
  return Vocabulary({60, 62, 64}, {Rational(1, 2), Rational(1), Rational(2)});
}

}  // namespace folkgen::testing
