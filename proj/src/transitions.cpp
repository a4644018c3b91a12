#include <cmath>
#include <sstream>

#include <json.hpp>

#include "folkgen/representation.hpp"

namespace folkgen {

namespace {

std::vector<std::string> labels_for(const Vocabulary& vocab, TokenStream which) {
  std::vector<std::string> labels;
  if (which == TokenStream::pitch) {
    for (const auto& token : vocab.pitch_tokens()) labels.push_back(token.to_string());
  } else {
    for (const auto& token : vocab.duration_tokens()) labels.push_back(to_string(token));
  }
  return labels;
}

nlohmann::json to_json(const TransitionMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.probs.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.probs.cols(); ++j) row.push_back(m.probs(i, j));
    rows.push_back(std::move(row));
  }
  return {{"labels", m.labels}, {"observed", m.observed}, {"probs", std::move(rows)}};
}

}  // namespace

TransitionMatrix transition_stats(std::span<const EncodedSong> corpus, const Vocabulary& vocab,
                                  TokenStream which) {
  const auto size = static_cast<Eigen::Index>(which == TokenStream::pitch ? vocab.pitch_size()
                                                                          : vocab.duration_size());
  TransitionMatrix out;
  out.labels = labels_for(vocab, which);
  out.probs = Eigen::MatrixXd::Zero(size, size);
  for (const auto& song : corpus) {
    const auto& seq = which == TokenStream::pitch ? song.pitches : song.durations;
    for (std::size_t n = 0; n + 1 < seq.size(); ++n) out.probs(seq[n], seq[n + 1]) += 1.0;
  }
  out.observed.assign(static_cast<std::size_t>(size), false);
  out.counts.assign(static_cast<std::size_t>(size), 0.0);
  for (Eigen::Index i = 0; i < size; ++i) {
    const double total = out.probs.row(i).sum();
    out.counts[static_cast<std::size_t>(i)] = total;
    if (total > 0) {
      out.probs.row(i) /= total;
      out.observed[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

std::string to_csv(const TransitionMatrix& matrix) {
  std::ostringstream out;
  out.precision(17);
  out << "from";
  for (const auto& label : matrix.labels) out << ',' << label;
  out << '\n';
  for (Eigen::Index i = 0; i < matrix.probs.rows(); ++i) {
    out << matrix.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < matrix.probs.cols(); ++j) out << ',' << matrix.probs(i, j);
    out << '\n';
  }
  return out.str();
}

std::string stats_report_json(std::span<const EncodedSong> corpus, const Vocabulary& vocab) {
  double mean = 0.0;
  double sq = 0.0;
  for (const auto& song : corpus) {
    const double notes = static_cast<double>(song.size()) - 1.0;
    mean += notes;
    sq += notes * notes;
  }
  const double n = static_cast<double>(corpus.size());
  if (n > 0) {
    mean /= n;
    sq = std::sqrt(std::max(0.0, sq / n - mean * mean));
  }
  nlohmann::json report{
      {"pitch_vocab", labels_for(vocab, TokenStream::pitch)},
      {"duration_vocab", labels_for(vocab, TokenStream::duration)},
      {"num_songs", corpus.size()},
      {"mean_len", mean},
      {"std_len", sq},
      {"transition_matrices",
       {{"pitch", to_json(transition_stats(corpus, vocab, TokenStream::pitch))},
        {"duration", to_json(transition_stats(corpus, vocab, TokenStream::duration))}}}};
  return report.dump(2);
}

}  // namespace folkgen
