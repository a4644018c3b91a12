#include "folkgen/model.hpp"

#include <map>
#include <tuple>

namespace folkgen {

namespace {

void check_index(int index, std::size_t size, const char* what) {
  if (index < 0 || static_cast<std::size_t>(index) >= size) {
    throw std::out_of_range(std::string(what) + " index " + std::to_string(index) + " out of range");
  }
}

}  // namespace

gru::NetworkDims rhythm_dims(const Vocabulary& vocab, const std::vector<int>& hidden) {
  const int d = static_cast<int>(vocab.duration_size());
  const int p = static_cast<int>(vocab.pitch_size());
  return gru::NetworkDims{d + p, hidden, d};
}

gru::NetworkDims melody_dims(const Vocabulary& vocab, const std::vector<int>& hidden) {
  const int d = static_cast<int>(vocab.duration_size());
  const int p = static_cast<int>(vocab.pitch_size());
  return gru::NetworkDims{p + d, hidden, p};
}

MelodyModel MelodyModel::create(Vocabulary vocab, const std::vector<int>& hidden, std::uint64_t seed) {
  MelodyModel model;
  model.rhythm_seed = seed * 2 + 1;
  model.melody_seed = seed * 2 + 2;
  model.rhythm = gru::NetworkParams::random(rhythm_dims(vocab, hidden), model.rhythm_seed);
  model.melody = gru::NetworkParams::random(melody_dims(vocab, hidden), model.melody_seed);
  model.vocab = std::move(vocab);
  model.meta.seed = seed;
  return model;
}

MelodyModel MelodyModel::zeros(Vocabulary vocab, const std::vector<int>& hidden) {
  MelodyModel model;
  model.rhythm = gru::NetworkParams::zeros(rhythm_dims(vocab, hidden));
  model.melody = gru::NetworkParams::zeros(melody_dims(vocab, hidden));
  model.vocab = std::move(vocab);
  return model;
}

void MelodyModel::validate() const {
  if (!(rhythm.dims() == rhythm_dims(vocab, rhythm.dims().hidden))) {
    throw std::invalid_argument("rhythm network does not match the vocabulary");
  }
  if (!(melody.dims() == melody_dims(vocab, melody.dims().hidden))) {
    throw std::invalid_argument("melody network does not match the vocabulary");
  }
}

ModelState init_state(const MelodyModel& model) {
  return ModelState{gru::initial_state(model.rhythm), gru::initial_state(model.melody), std::nullopt,
                    std::nullopt};
}

gru::Vector rhythm_input(const Vocabulary& vocab, int duration, int pitch) {
  check_index(duration, vocab.duration_size(), "duration");
  check_index(pitch, vocab.pitch_size(), "pitch");
  const auto d = static_cast<Eigen::Index>(vocab.duration_size());
  gru::Vector x = gru::Vector::Zero(d + static_cast<Eigen::Index>(vocab.pitch_size()));
  x(duration) = 1.0;
  x(d + pitch) = 1.0;
  return x;
}

gru::Vector melody_input(const Vocabulary& vocab, int pitch, int next_duration) {
  check_index(pitch, vocab.pitch_size(), "pitch");
  check_index(next_duration, vocab.duration_size(), "duration");
  const auto p = static_cast<Eigen::Index>(vocab.pitch_size());
  gru::Vector x = gru::Vector::Zero(p + static_cast<Eigen::Index>(vocab.duration_size()));
  x(pitch) = 1.0;
  x(p + next_duration) = 1.0;
  return x;
}

gru::StepOutput next_duration_dist(const MelodyModel& model, ModelState& state, int duration, int pitch) {
  auto out = gru::gru_step(model.rhythm, state.rhythm, rhythm_input(model.vocab, duration, pitch));
  state.last_duration = duration;
  state.last_pitch = pitch;
  return out;
}

gru::StepOutput next_pitch_dist(const MelodyModel& model, ModelState& state, int pitch, int next_duration) {
  auto out = gru::gru_step(model.melody, state.melody, melody_input(model.vocab, pitch, next_duration));
  state.last_pitch = pitch;
  return out;
}

TeacherForced teacher_forced(const Vocabulary& vocab, const EncodedSong& song) {
  if (song.pitches.size() != song.durations.size()) throw std::invalid_argument("malformed encoded song");
  if (song.size() < 2) throw std::invalid_argument("song needs at least two tokens");
  TeacherForced out;
  const std::size_t steps = song.size() - 1;
  out.rhythm_inputs.reserve(steps);
  out.melody_inputs.reserve(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    out.rhythm_inputs.push_back(rhythm_input(vocab, song.durations[n], song.pitches[n]));
    out.rhythm_targets.push_back(song.durations[n + 1]);
    out.melody_inputs.push_back(melody_input(vocab, song.pitches[n], song.durations[n + 1]));
    out.melody_targets.push_back(song.pitches[n + 1]);
  }
  return out;
}

SongNll teacher_forced_nll(const MelodyModel& model, const EncodedSong& song) {
  const auto tf = teacher_forced(model.vocab, song);
  return SongNll{gru::sequence_nll(model.rhythm, tf.rhythm_inputs, tf.rhythm_targets),
                 gru::sequence_nll(model.melody, tf.melody_inputs, tf.melody_targets)};
}

std::vector<Opening> collect_openings(std::span<const EncodedSong> songs) {
  std::map<std::tuple<int, int, int, int>, std::uint64_t> counts;
  for (const auto& song : songs) {
    if (song.size() < 3) continue;  // needs two notes before the song ending
    ++counts[{song.pitches[0], song.durations[0], song.pitches[1], song.durations[1]}];
  }
  std::vector<Opening> out;
  for (const auto& [key, count] : counts) {
    const auto [p0, d0, p1, d1] = key;
    out.push_back(Opening{p0, d0, p1, d1, count});
  }
  return out;
}

}  // namespace folkgen
