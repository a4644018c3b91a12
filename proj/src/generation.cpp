#include "folkgen/generation.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

namespace folkgen {

void GenerationConfig::validate() const {
  if (max_notes < 1) throw std::invalid_argument("max_notes must be at least 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature must be positive");
  if (num_samples < 0) throw std::invalid_argument("num_samples must be non-negative");
}

std::string to_string(Termination t) { return t == Termination::ended_naturally ? "ended_naturally" : "truncated"; }

std::size_t GeneratedSong::note_count() const {
  return terminated == Termination::ended_naturally ? encoded.size() - 1 : encoded.size();
}

gru::Vector tempered_distribution(const gru::Vector& logits, double temperature) {
  return gru::softmax(logits / temperature);
}

int sample_index(const gru::Vector& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * probs.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u at the very top; take the last index with mass.
  for (Eigen::Index i = probs.size(); i-- > 0;) {
    if (probs(i) > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

int argmax_index(const gru::Vector& values) {
  Eigen::Index best = 0;
  values.maxCoeff(&best);
  return static_cast<int>(best);
}

namespace {

void check_seed(const MelodyModel& model, const EncodedSong& seed) {
  if (seed.pitches.size() != seed.durations.size()) throw std::invalid_argument("malformed seed");
  if (seed.size() == 0) throw std::invalid_argument("seed must contain at least one note");
  const int end = model.vocab.song_ending_index();
  for (std::size_t i = 0; i < seed.size(); ++i) {
    const int p = seed.pitches[i];
    const int d = seed.durations[i];
    if (p < 0 || p >= model.pitch_size()) throw std::out_of_range("seed pitch index out of range");
    if (d < 0 || d >= model.duration_size()) throw std::out_of_range("seed duration index out of range");
    if (p == end && i + 1 != seed.size()) throw std::invalid_argument("seed has a song ending before its end");
  }
}

int choose(const gru::StepOutput& out, const GenerationConfig& config, std::mt19937_64& rng) {
  if (config.greedy) return argmax_index(out.logits);
  return sample_index(tempered_distribution(out.logits, config.temperature), rng);
}

}  // namespace

GeneratedSong continue_song(const MelodyModel& model, const EncodedSong& seed, const GenerationConfig& config,
                            std::mt19937_64& rng) {
  config.validate();
  check_seed(model, seed);
  GeneratedSong out;
  out.encoded = seed;
  out.seed_len = seed.size();

  const int end = model.vocab.song_ending_index();
  if (seed.pitches.back() == end) {
    out.terminated = Termination::ended_naturally;
    return out;
  }

  ModelState state = init_state(model);
  // Teacher-forced warm-up: every seed transition except the last one.
  for (std::size_t n = 0; n + 1 < seed.size(); ++n) {
    next_duration_dist(model, state, seed.durations[n], seed.pitches[n]);
    next_pitch_dist(model, state, seed.pitches[n], seed.durations[n + 1]);
  }

  int p = seed.pitches.back();
  int d = seed.durations.back();
  const auto cap = static_cast<std::size_t>(config.max_notes);
  while (out.encoded.size() < cap) {
    const auto dur = next_duration_dist(model, state, d, p);
    const int d_next = choose(dur, config, rng);
    const auto pit = next_pitch_dist(model, state, p, d_next);
    const int p_next = choose(pit, config, rng);
    out.note_probs.push_back(dur.probs(d_next) * pit.probs(p_next));
    if (p_next == end) {
      out.encoded.pitches.push_back(end);
      out.encoded.durations.push_back(model.vocab.unit_duration_index());
      out.terminated = Termination::ended_naturally;
      return out;
    }
    out.encoded.pitches.push_back(p_next);
    out.encoded.durations.push_back(d_next);
    p = p_next;
    d = d_next;
  }
  out.terminated = Termination::truncated;
  return out;
}

GeneratedSong continue_song(const MelodyModel& model, const EncodedSong& seed, const GenerationConfig& config) {
  std::mt19937_64 rng(config.rng_seed);
  return continue_song(model, seed, config, rng);
}

GeneratedSong generate_song(const MelodyModel& model, const std::array<std::pair<int, int>, 2>& first_notes,
                            const GenerationConfig& config) {
  EncodedSong seed;
  for (const auto& [p, d] : first_notes) {
    if (p == model.vocab.song_ending_index()) throw std::invalid_argument("first notes cannot be the song ending");
    seed.pitches.push_back(p);
    seed.durations.push_back(d);
  }
  return continue_song(model, seed, config);
}

std::string to_json(const BatchStats& s) {
  return nlohmann::ordered_json{{"n", s.n}, {"mean_len", s.mean_len}, {"std_len", s.std_len},
                        {"terminated", s.terminated}, {"novel", s.novel}}
      .dump();
}

BatchResult batch_generate(const MelodyModel& model, const GenerationConfig& config,
                           const std::optional<std::array<std::pair<int, int>, 2>>& first_notes) {
  config.validate();
  BatchResult result;
  if (config.num_samples == 0) return result;
  if (!first_notes && model.openings.empty()) throw std::invalid_argument("model has no opening table");

  std::vector<double> weights;
  for (const auto& o : model.openings) weights.push_back(static_cast<double>(o.count));
  const std::set<std::uint64_t> known(model.train_song_hashes.begin(), model.train_song_hashes.end());

  std::size_t ended = 0;
  std::size_t novel = 0;
  for (int i = 0; i < config.num_samples; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.rng_seed), static_cast<std::uint32_t>(config.rng_seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    EncodedSong seed;
    if (first_notes) {
      for (const auto& [p, d] : *first_notes) {
        seed.pitches.push_back(p);
        seed.durations.push_back(d);
      }
    } else {
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      const auto& o = model.openings[pick(rng)];
      seed.pitches = {o.pitch0, o.pitch1};
      seed.durations = {o.duration0, o.duration1};
    }
    auto song = continue_song(model, seed, config, rng);
    if (song.terminated == Termination::ended_naturally) ++ended;
    if (!known.contains(song_hash(song.encoded))) ++novel;
    result.songs.push_back(std::move(song));
  }

  const auto n = static_cast<double>(result.songs.size());
  double sum = 0.0;
  for (const auto& s : result.songs) sum += static_cast<double>(s.note_count());
  const double mean = sum / n;
  double var = 0.0;
  for (const auto& s : result.songs) var += std::pow(static_cast<double>(s.note_count()) - mean, 2);
  result.stats = BatchStats{result.songs.size(), mean, std::sqrt(var / n), static_cast<double>(ended) / n,
                            static_cast<double>(novel) / n};
  return result;
}

}  // namespace folkgen
