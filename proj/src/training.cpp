#include "folkgen/training.hpp"

#include <chrono>
#include <iostream>
#include <sstream>

#include "folkgen/checkpoint.hpp"

namespace folkgen {

using nlohmann::json;

void adam_step(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
               std::int64_t t, const AdamHyper& hp) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw std::invalid_argument("adam_step shape mismatch");
  }
  if (t < 1) throw std::invalid_argument("adam_step needs t >= 1");
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double g = grad[k];
    m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g;
    v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g * g;
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    theta[k] -= hp.alpha * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

AdamState AdamState::for_params(const gru::NetworkParams& params, AdamHyper hyper) {
  return AdamState{gru::NetworkParams::zeros(params.dims()), gru::NetworkParams::zeros(params.dims()), 0, hyper};
}

bool adam_update(gru::NetworkParams& params, const gru::NetworkParams& grads, AdamState& adam) {
  if (!(grads.dims() == params.dims()) || !(adam.m.dims() == params.dims()) || !(adam.v.dims() == params.dims())) {
    throw std::invalid_argument("adam_update shape mismatch");
  }
  if (!grads.all_finite()) return false;
  ++adam.t;
  auto p = params.blocks();
  const auto g = grads.blocks();
  auto m = adam.m.blocks();
  auto v = adam.v.blocks();
  for (std::size_t b = 0; b < p.size(); ++b) {
    const auto n = static_cast<std::size_t>(p[b].size());
    adam_step({p[b].data, n}, {g[b].data, n}, {m[b].data, n}, {v[b].data, n}, adam.t, adam.hyper);
  }
  return true;
}

double gradient_norm(const gru::NetworkParams& grads) {
  double sum = 0.0;
  for (const auto& block : grads.blocks()) {
    for (Eigen::Index k = 0; k < block.size(); ++k) sum += block.data[k] * block.data[k];
  }
  return std::sqrt(sum);
}

void clip_gradient(gru::NetworkParams& grads, double max_norm) {
  const double norm = gradient_norm(grads);
  if (!(norm > max_norm) || !std::isfinite(norm)) return;
  const double scale = max_norm / norm;
  for (auto& block : grads.blocks()) {
    for (Eigen::Index k = 0; k < block.size(); ++k) block.data[k] *= scale;
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (songs_per_epoch <= 0) throw std::invalid_argument("songs per epoch must be positive");
  if (eval_sample <= 0) throw std::invalid_argument("evaluation sample must be positive");
  if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("split must lie strictly between 0 and 1");
  if (hidden_size <= 0 || layers <= 0) throw std::invalid_argument("network sizes must be positive");
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
  if (!(adam.alpha > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

std::string to_json_line(const EpochRecord& r) {
  return nlohmann::ordered_json{{"epoch", r.epoch},
              {"train_rhythm_nll", r.train_rhythm_nll},
              {"train_melody_nll", r.train_melody_nll},
              {"test_rhythm_nll", r.test_rhythm_nll},
              {"test_melody_nll", r.test_melody_nll},
              {"secs", r.secs}}
      .dump();
}

std::size_t train_count(std::size_t n, double split) {
  if (n < 2) throw std::invalid_argument("splitting needs at least two songs");
  // Tiny slack so 0.8 * 10 is 8 despite rounding in the product.
  auto k = static_cast<std::size_t>(std::floor(split * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

std::vector<std::size_t> epoch_schedule(std::size_t songs, std::size_t count, std::mt19937_64& rng) {
  if (songs == 0) throw std::invalid_argument("empty training set");
  std::vector<std::size_t> out;
  out.reserve(count);
  if (songs >= count) {
    std::vector<std::size_t> order(songs);
    for (std::size_t i = 0; i < songs; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, songs - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pick(rng));
  }
  return out;
}

namespace {

void emit_warning(const TrainConfig& config, const std::string& message) {
  if (config.warn) {
    config.warn(message);
  } else {
    std::cerr << "warning: " << message << "\n";
  }
}

// Forward, backward and one Adam step for one network on one song.
bool update_network(gru::NetworkParams& params, AdamState& adam, std::span<const gru::Vector> inputs,
                    std::span<const int> targets, const TrainConfig& config, const std::string& label) {
  gru::NetworkParams grads;
  try {
    const auto fwd = gru::forward_sequence(params, inputs);
    grads = gru::backward_sequence(params, fwd.tape, targets);
  } catch (const gru::NumericError& e) {
    emit_warning(config, label + ": " + e.what() + "; update skipped");
    return false;
  }
  if (config.clip_norm) clip_gradient(grads, *config.clip_norm);
  if (!adam_update(params, grads, adam)) {
    emit_warning(config, label + ": non-finite gradient; update skipped");
    return false;
  }
  return true;
}

}  // namespace

EpochStats train_epoch(MelodyModel& model, std::span<const EncodedSong> train, AdamState& rhythm_adam,
                       AdamState& melody_adam, const TrainConfig& config, std::mt19937_64& rng,
                       std::mt19937_64* melody_rng) {
  const auto count = static_cast<std::size_t>(config.songs_per_epoch);
  const auto rhythm_order = epoch_schedule(train.size(), count, rng);
  std::vector<std::size_t> melody_order = rhythm_order;
  if (config.independent_schedules) {
    if (melody_rng == nullptr) throw std::invalid_argument("independent schedules need a melody rng");
    melody_order = epoch_schedule(train.size(), count, *melody_rng);
  }

  EpochStats stats;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t ri = rhythm_order[k];
    const std::size_t mi = melody_order[k];
    const auto tf_r = teacher_forced(model.vocab, train[ri]);
    if (update_network(model.rhythm, rhythm_adam, tf_r.rhythm_inputs, tf_r.rhythm_targets, config,
                       "rhythm network, song " + std::to_string(ri))) {
      ++stats.rhythm_updates;
    } else {
      ++stats.skipped;
    }
    const auto tf_m = mi == ri ? tf_r : teacher_forced(model.vocab, train[mi]);
    if (update_network(model.melody, melody_adam, tf_m.melody_inputs, tf_m.melody_targets, config,
                       "melody network, song " + std::to_string(mi))) {
      ++stats.melody_updates;
    } else {
      ++stats.skipped;
    }
  }
  return stats;
}

SongNll evaluate(const MelodyModel& model, std::span<const EncodedSong> songs, std::size_t sample_size,
                 std::mt19937_64& rng) {
  if (songs.empty()) throw std::invalid_argument("cannot evaluate on an empty set");
  const std::size_t k = std::min(sample_size, songs.size());
  const auto order = epoch_schedule(songs.size(), k, rng);
  SongNll total;
  for (std::size_t i : order) {
    const auto nll = teacher_forced_nll(model, songs[i]);
    total.rhythm += nll.rhythm;
    total.melody += nll.melody;
  }
  total.rhythm /= static_cast<double>(k);
  total.melody /= static_cast<double>(k);
  return total;
}

SongNll evaluate_all(const MelodyModel& model, std::span<const EncodedSong> songs) {
  if (songs.empty()) throw std::invalid_argument("cannot evaluate on an empty set");
  SongNll total;
  for (const auto& song : songs) {
    const auto nll = teacher_forced_nll(model, song);
    total.rhythm += nll.rhythm;
    total.melody += nll.melody;
  }
  total.rhythm /= static_cast<double>(songs.size());
  total.melody /= static_cast<double>(songs.size());
  return total;
}

TrainingState begin_training(const Vocabulary& vocab, std::span<const EncodedSong> train,
                             std::span<const EncodedSong> test, const TrainConfig& config) {
  config.validate();
  if (train.empty() || test.empty()) throw std::invalid_argument("training and test sets must be non-empty");
  TrainingState state;
  state.current = MelodyModel::create(vocab, config.hidden(), config.seed);
  state.current.openings = collect_openings(train);
  for (const auto& song : train) state.current.train_song_hashes.push_back(song_hash(song));
  state.current.meta.corpus_hash = corpus_hash(train);
  state.current.meta.test_hash = corpus_hash(test);
  state.best = state.current;
  state.rhythm_adam = AdamState::for_params(state.current.rhythm, config.adam);
  state.melody_adam = AdamState::for_params(state.current.melody, config.adam);
  state.rng.seed(config.seed);
  state.melody_rng.seed(config.seed ^ 0x9e3779b97f4a7c15ULL);
  return state;
}

const EpochRecord& run_epoch(TrainingState& state, std::span<const EncodedSong> train,
                             std::span<const EncodedSong> test, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto stats = train_epoch(state.current, train, state.rhythm_adam, state.melody_adam, config, state.rng,
                                 &state.melody_rng);
  const auto eval_k = static_cast<std::size_t>(config.eval_sample);
  const auto train_nll = evaluate(state.current, train, eval_k, state.rng);
  const auto test_nll = evaluate(state.current, test, eval_k, state.rng);

  EpochRecord record;
  record.epoch = static_cast<int>(state.report.epochs.size()) + 1;
  record.train_rhythm_nll = train_nll.rhythm;
  record.train_melody_nll = train_nll.melody;
  record.test_rhythm_nll = test_nll.rhythm;
  record.test_melody_nll = test_nll.melody;
  record.rhythm_updates = stats.rhythm_updates;
  record.melody_updates = stats.melody_updates;
  record.skipped = stats.skipped;
  record.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  state.current.meta.epochs = record.epoch;
  if (record.test_total() < state.report.best_test_nll) {
    state.report.best_test_nll = record.test_total();
    state.report.best_epoch = record.epoch;
    state.best = state.current;
    state.best.meta.best_epoch = record.epoch;
    state.best.meta.best_test_nll = record.test_total();
  }
  state.best.meta.epochs = record.epoch;
  state.current.meta.best_epoch = state.best.meta.best_epoch;
  state.current.meta.best_test_nll = state.best.meta.best_test_nll;
  state.report.epochs.push_back(record);
  return state.report.epochs.back();
}

namespace {

json adam_to_json(const AdamState& adam) {
  return json{{"m", network_to_json(adam.m, 0)},
              {"v", network_to_json(adam.v, 0)},
              {"t", adam.t},
              {"alpha", adam.hyper.alpha},
              {"beta1", adam.hyper.beta1},
              {"beta2", adam.hyper.beta2},
              {"eps", adam.hyper.eps}};
}

AdamState adam_from_json(const json& j) {
  AdamState adam;
  adam.m = network_from_json(j.at("m"));
  adam.v = network_from_json(j.at("v"));
  adam.t = j.at("t").get<std::int64_t>();
  adam.hyper = AdamHyper{j.at("alpha").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
                         j.at("eps").get<double>()};
  return adam;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

std::mt19937_64 rng_from_string(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream ss(text);
  ss >> rng;
  if (!ss) throw CheckpointError("bad random generator state");
  return rng;
}

json record_to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_rhythm_nll", r.train_rhythm_nll},
              {"train_melody_nll", r.train_melody_nll},
              {"test_rhythm_nll", r.test_rhythm_nll},
              {"test_melody_nll", r.test_melody_nll},
              {"secs", r.secs},
              {"rhythm_updates", r.rhythm_updates},
              {"melody_updates", r.melody_updates},
              {"skipped", r.skipped}};
}

EpochRecord record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.train_rhythm_nll = j.at("train_rhythm_nll").get<double>();
  r.train_melody_nll = j.at("train_melody_nll").get<double>();
  r.test_rhythm_nll = j.at("test_rhythm_nll").get<double>();
  r.test_melody_nll = j.at("test_melody_nll").get<double>();
  r.secs = j.at("secs").get<double>();
  r.rhythm_updates = j.at("rhythm_updates").get<std::size_t>();
  r.melody_updates = j.at("melody_updates").get<std::size_t>();
  r.skipped = j.at("skipped").get<std::size_t>();
  return r;
}

}  // namespace

json training_state_to_json(const TrainingState& state) {
  json epochs = json::array();
  for (const auto& r : state.report.epochs) epochs.push_back(record_to_json(r));
  const double best = state.report.best_test_nll;
  return json{{"version", 1},
              {"current", model_to_json(state.current)},
              {"best", model_to_json(state.best)},
              {"rhythm_adam", adam_to_json(state.rhythm_adam)},
              {"melody_adam", adam_to_json(state.melody_adam)},
              {"rng", rng_to_string(state.rng)},
              {"melody_rng", rng_to_string(state.melody_rng)},
              {"report",
               {{"epochs", std::move(epochs)},
                {"best_epoch", state.report.best_epoch},
                {"best_test_nll", std::isfinite(best) ? json(best) : json(nullptr)},
                {"excluded_test_songs", state.report.excluded_test_songs}}}};
}

TrainingState training_state_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw CheckpointError("unsupported training state version");
    TrainingState state;
    state.current = model_from_json(j.at("current"));
    state.best = model_from_json(j.at("best"));
    state.rhythm_adam = adam_from_json(j.at("rhythm_adam"));
    state.melody_adam = adam_from_json(j.at("melody_adam"));
    state.rng = rng_from_string(j.at("rng").get<std::string>());
    state.melody_rng = rng_from_string(j.at("melody_rng").get<std::string>());
    const json& report = j.at("report");
    for (const auto& r : report.at("epochs")) state.report.epochs.push_back(record_from_json(r));
    state.report.best_epoch = report.at("best_epoch").get<int>();
    const json& best = report.at("best_test_nll");
    state.report.best_test_nll = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    state.report.excluded_test_songs = report.at("excluded_test_songs").get<std::size_t>();
    if (!(state.rhythm_adam.m.dims() == state.current.rhythm.dims()) ||
        !(state.melody_adam.m.dims() == state.current.melody.dims())) {
      throw CheckpointError("optimizer state does not match the networks");
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed training state: ") + e.what());
  }
}

PreparedCorpus prepare_corpus(std::span<const abc::Score> scores, double split, std::uint64_t seed) {
  if (scores.empty()) throw std::invalid_argument("empty corpus");
  std::vector<abc::Score> normalized;
  normalized.reserve(scores.size());
  for (const auto& s : scores) normalized.push_back(normalize_score(s).score);
  const auto parts = split_corpus<abc::Score>(normalized, split, seed);

  PreparedCorpus out;
  out.vocab = build_vocabulary(parts.train);
  for (const auto& s : parts.train) out.train.push_back(encode_song(s, out.vocab));
  for (const auto& s : parts.test) {
    try {
      out.test.push_back(encode_song(s, out.vocab));
    } catch (const OutOfVocabularyError&) {
      ++out.excluded_test;
    }
  }
  if (out.test.empty()) {
    throw std::invalid_argument("no test song can be encoded with the training vocabulary");
  }
  return out;
}

TrainResult train_on_split(const Vocabulary& vocab, std::span<const EncodedSong> train,
                           std::span<const EncodedSong> test, const TrainConfig& config,
                           const EpochCallback& on_epoch) {
  auto state = begin_training(vocab, train, test, config);
  for (int e = 0; e < config.epochs; ++e) {
    const auto& record = run_epoch(state, train, test, config);
    if (on_epoch) on_epoch(state, record);
  }
  return TrainResult{std::move(state.best), std::move(state.report)};
}

TrainResult train(std::span<const abc::Score> scores, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto corpus = prepare_corpus(scores, config.split, config.seed);
  auto result = train_on_split(corpus.vocab, corpus.train, corpus.test, config, on_epoch);
  result.report.excluded_test_songs = corpus.excluded_test;
  return result;
}

namespace {

double markov_stream_nll(const TransitionMatrix& tm, const std::vector<int>& seq, double alpha) {
  const auto v = static_cast<double>(tm.probs.cols());
  double total = 0.0;
  for (std::size_t n = 0; n + 1 < seq.size(); ++n) {
    const int a = seq[n];
    const int b = seq[n + 1];
    const double row = tm.counts[static_cast<std::size_t>(a)];
    const double count = tm.probs(a, b) * row;
    total -= std::log((count + alpha) / (row + alpha * v));
  }
  return total / static_cast<double>(seq.size() - 1);
}

}  // namespace

SongNll markov_baseline_nll(std::span<const EncodedSong> train, std::span<const EncodedSong> test,
                            const Vocabulary& vocab, double alpha) {
  if (test.empty()) throw std::invalid_argument("empty test set");
  if (!(alpha > 0.0)) throw std::invalid_argument("smoothing must be positive");
  const auto durations = transition_stats(train, vocab, TokenStream::duration);
  const auto pitches = transition_stats(train, vocab, TokenStream::pitch);
  SongNll total;
  for (const auto& song : test) {
    if (song.size() < 2) throw std::invalid_argument("song needs at least two tokens");
    total.rhythm += markov_stream_nll(durations, song.durations, alpha);
    total.melody += markov_stream_nll(pitches, song.pitches, alpha);
  }
  total.rhythm /= static_cast<double>(test.size());
  total.melody /= static_cast<double>(test.size());
  return total;
}

}  // namespace folkgen
