#pragma once

// Per-song Adam training of both networks with best-on-test retention.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "folkgen/abc.hpp"
#include "folkgen/model.hpp"

namespace folkgen {

struct AdamHyper {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step on flat arrays; `t` is the step number
/// after incrementing (first step: t = 1).
void adam_step(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
               std::int64_t t, const AdamHyper& hyper);

struct AdamState {
  gru::NetworkParams m;
  gru::NetworkParams v;
  std::int64_t t = 0;
  AdamHyper hyper;

  static AdamState for_params(const gru::NetworkParams& params, AdamHyper hyper = {});
};

/// Applies one Adam step. Returns false, leaving everything untouched, when
/// the gradient has a non-finite entry.
bool adam_update(gru::NetworkParams& params, const gru::NetworkParams& grads, AdamState& adam);

/// Global L2 norm of a gradient.
double gradient_norm(const gru::NetworkParams& grads);

/// Rescales `grads` so its norm is at most `max_norm`.
void clip_gradient(gru::NetworkParams& grads, double max_norm);

struct TrainConfig {
  int epochs = 100;
  int songs_per_epoch = 200;
  int eval_sample = 200;
  double split = 0.8;
  std::uint64_t seed = 1;
  int hidden_size = 128;
  int layers = 3;
  std::optional<double> clip_norm;
  bool independent_schedules = false;  // melody network draws its own song sample
  AdamHyper adam;
  std::function<void(const std::string&)> warn;  // defaults to stderr

  std::vector<int> hidden() const { return std::vector<int>(static_cast<std::size_t>(layers), hidden_size); }
  /// Throws std::invalid_argument for out-of-range settings.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_rhythm_nll = 0.0;
  double train_melody_nll = 0.0;
  double test_rhythm_nll = 0.0;
  double test_melody_nll = 0.0;
  double secs = 0.0;
  std::size_t rhythm_updates = 0;
  std::size_t melody_updates = 0;
  std::size_t skipped = 0;

  double test_total() const { return test_rhythm_nll + test_melody_nll; }
};

/// {"epoch", "train_rhythm_nll", "train_melody_nll", "test_rhythm_nll", "test_melody_nll", "secs"}
std::string to_json_line(const EpochRecord& record);

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_test_nll = std::numeric_limits<double>::infinity();
  std::size_t excluded_test_songs = 0;
};

template <class T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
};

/// floor(split * n) training items, clamped so both parts are non-empty.
std::size_t train_count(std::size_t n, double split);

/// Seeded shuffle then split. Throws std::invalid_argument for fewer than 2 items.
template <class T>
Split<T> split_corpus(std::span<const T> items, double split, std::uint64_t seed) {
  if (items.size() < 2) throw std::invalid_argument("splitting needs at least two songs");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t k = train_count(items.size(), split);
  Split<T> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < k ? out.train : out.test).push_back(items[order[i]]);
  return out;
}

/// Song indices for one epoch: a distinct sample when the set is large
/// enough, otherwise uniform draws with replacement.
std::vector<std::size_t> epoch_schedule(std::size_t songs, std::size_t count, std::mt19937_64& rng);

struct EpochStats {
  std::size_t rhythm_updates = 0;
  std::size_t melody_updates = 0;
  std::size_t skipped = 0;
};

/// One epoch of per-song updates. `melody_rng` draws the melody schedule
/// when config.independent_schedules is set.
EpochStats train_epoch(MelodyModel& model, std::span<const EncodedSong> train, AdamState& rhythm_adam,
                       AdamState& melody_adam, const TrainConfig& config, std::mt19937_64& rng,
                       std::mt19937_64* melody_rng = nullptr);

/// Mean teacher-forced NLL over min(sample_size, |songs|) distinct songs.
SongNll evaluate(const MelodyModel& model, std::span<const EncodedSong> songs, std::size_t sample_size,
                 std::mt19937_64& rng);

/// Mean teacher-forced NLL over every song.
SongNll evaluate_all(const MelodyModel& model, std::span<const EncodedSong> songs);

/// Everything needed to continue a run bit-for-bit.
struct TrainingState {
  MelodyModel current;
  MelodyModel best;
  AdamState rhythm_adam;
  AdamState melody_adam;
  std::mt19937_64 rng;
  std::mt19937_64 melody_rng;
  TrainReport report;
};

/// Fresh networks plus the bookkeeping derived from the training split.
TrainingState begin_training(const Vocabulary& vocab, std::span<const EncodedSong> train,
                             std::span<const EncodedSong> test, const TrainConfig& config);

/// Trains one epoch, evaluates, and updates the best snapshot.
const EpochRecord& run_epoch(TrainingState& state, std::span<const EncodedSong> train,
                             std::span<const EncodedSong> test, const TrainConfig& config);

nlohmann::json training_state_to_json(const TrainingState& state);
TrainingState training_state_from_json(const nlohmann::json& j);

struct PreparedCorpus {
  Vocabulary vocab;
  std::vector<EncodedSong> train;
  std::vector<EncodedSong> test;
  std::size_t excluded_test = 0;  // test songs with tokens unseen in training
};

/// Normalizes, splits, builds the vocabulary from the training part only,
/// and encodes. Throws std::invalid_argument for unusable corpora.
PreparedCorpus prepare_corpus(std::span<const abc::Score> scores, double split, std::uint64_t seed);

struct TrainResult {
  MelodyModel model;  // best-on-test snapshot
  TrainReport report;
};

using EpochCallback = std::function<void(const TrainingState&, const EpochRecord&)>;

TrainResult train_on_split(const Vocabulary& vocab, std::span<const EncodedSong> train,
                           std::span<const EncodedSong> test, const TrainConfig& config,
                           const EpochCallback& on_epoch = {});

TrainResult train(std::span<const abc::Score> scores, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// First-order Markov NLL of the test songs under transition counts from
/// the training songs, with add-`alpha` smoothing. Per-song means, averaged.
SongNll markov_baseline_nll(std::span<const EncodedSong> train, std::span<const EncodedSong> test,
                            const Vocabulary& vocab, double alpha = 0.5);

}  // namespace folkgen
