#include "folkgen/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "folkgen/abc.hpp"
#include "folkgen/checkpoint.hpp"
#include "folkgen/generation.hpp"
#include "folkgen/service.hpp"
#include "folkgen/training.hpp"

namespace folkgen::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<AbcSource> load_abc_sources(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw DataError("no such file or directory: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".abc") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<AbcSource> out;
  for (const auto& f : files) {
    try {
      out.push_back(AbcSource{f.filename().string(), read_file(f)});
    } catch (const std::runtime_error& e) {
      throw DataError(e.what());
    }
  }
  return out;
}

namespace {

struct Globals {
  std::uint64_t seed = 1;
  bool quiet = false;
  bool json = false;
};

struct LoadedCorpus {
  std::vector<abc::Score> scores;
  std::vector<abc::SkipReport> skipped;
  std::size_t tunes = 0;
};

LoadedCorpus load_corpus(const fs::path& path) {
  LoadedCorpus out;
  for (const auto& src : load_abc_sources(path)) {
    auto parsed = abc::parse_corpus(src.text);
    out.tunes += parsed.scores.size() + parsed.skipped.size();
    for (auto& s : parsed.scores) out.scores.push_back(std::move(s));
    for (auto& s : parsed.skipped) out.skipped.push_back(std::move(s));
  }
  if (out.tunes == 0) throw DataError("no tunes found in " + path.string());
  return out;
}

std::vector<EncodedSong> encode_all(const std::vector<abc::Score>& scores, Vocabulary& vocab) {
  std::vector<abc::Score> normalized;
  for (const auto& s : scores) normalized.push_back(normalize_score(s).score);
  vocab = build_vocabulary(normalized);
  std::vector<EncodedSong> songs;
  for (const auto& s : normalized) songs.push_back(encode_song(s, vocab));
  return songs;
}

std::pair<double, double> length_stats(const std::vector<abc::Score>& scores) {
  if (scores.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (const auto& s : scores) sum += static_cast<double>(s.events.size());
  const double mean = sum / static_cast<double>(scores.size());
  double var = 0.0;
  for (const auto& s : scores) var += std::pow(static_cast<double>(s.events.size()) - mean, 2);
  return {mean, std::sqrt(var / static_cast<double>(scores.size()))};
}

MelodyModel load_checkpoint(const std::string& path) {
  try {
    return load_model(path);
  } catch (const CheckpointError& e) {
    throw DataError(path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  try {
    write_file_atomic(path, text);
  } catch (const std::exception& e) {
    throw DataError(std::string("cannot write ") + path.string() + ": " + e.what());
  }
}

// Generated tunes carry no key or meter; they are written in C with the
// modal duration shown as an eighth note.
std::string generated_abc(const MelodyModel& model, const GeneratedSong& song, int ref, Rational base, int shift,
                          const abc::KeySignature& key, const std::optional<abc::Meter>& meter,
                          Rational unit, const std::string& title) {
  auto score = decode_song(song.encoded, model.vocab, base, shift);
  score.header.reference_number = ref;
  score.header.title = title;
  score.header.key = key;
  score.header.meter = meter;
  score.header.unit_note_length = unit;
  return abc::emit_abc(score);
}

std::array<std::pair<int, int>, 2> parse_first_notes(const std::string& text, const Vocabulary& vocab) {
  // "pitch:duration,pitch:duration" in token spelling, e.g. "62:1,66:1/2".
  std::array<std::pair<int, int>, 2> out{};
  std::stringstream ss(text);
  std::string item;
  int count = 0;
  while (std::getline(ss, item, ',')) {
    if (count == 2) throw DataError("--first-notes takes exactly two notes");
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw DataError("bad note '" + item + "', expected pitch:duration");
    const std::string p = item.substr(0, colon);
    const std::string d = item.substr(colon + 1);
    std::optional<int> pi;
    if (p == "silence") {
      pi = vocab.silence_index();
    } else {
      try {
        pi = vocab.pitch_index(PitchToken::pitch(std::stoi(p)));
      } catch (const std::exception&) {
      }
    }
    std::optional<int> di;
    try {
      di = vocab.duration_index(parse_rational(d));
    } catch (const std::exception&) {
    }
    if (!pi || !di) throw DataError("note '" + item + "' is not in the model vocabulary");
    out[static_cast<std::size_t>(count++)] = {*pi, *di};
  }
  if (count != 2) throw DataError("--first-notes takes exactly two notes");
  return out;
}

// --- subcommands -------------------------------------------------------------

int run_parse(const std::string& dir, const std::string& skips_path, const Globals& g, std::ostream& out) {
  const auto corpus = load_corpus(dir);
  std::string skip_lines;
  for (const auto& s : corpus.skipped) skip_lines += abc::to_json_line(s) + "\n";
  if (!skips_path.empty()) {
    write_text(skips_path, skip_lines);
  } else if (!g.quiet) {
    out << skip_lines;
  }
  const auto [mean, sd] = length_stats(corpus.scores);
  const double yield = static_cast<double>(corpus.scores.size()) / static_cast<double>(corpus.tunes);
  if (g.json) {
    out << nlohmann::ordered_json{{"tunes", corpus.tunes},     {"parsed", corpus.scores.size()},
                                  {"skipped", corpus.skipped.size()}, {"yield", yield},
                                  {"mean_len", mean},          {"std_len", sd}}
               .dump()
        << "\n";
  } else {
    out << "parsed " << corpus.scores.size() << " of " << corpus.tunes << " tunes (" << yield * 100.0
        << "%), length " << mean << " +- " << sd << " notes\n";
  }
  return ok;
}

int run_stats(const std::string& dir, const std::string& csv_dir, std::ostream& out) {
  const auto corpus = load_corpus(dir);
  if (corpus.scores.empty()) throw DataError("no tune could be parsed");
  Vocabulary vocab;
  const auto songs = encode_all(corpus.scores, vocab);
  if (!csv_dir.empty()) {
    std::error_code ec;
    fs::create_directories(csv_dir, ec);
    write_text(fs::path(csv_dir) / "pitch_transitions.csv",
               to_csv(transition_stats(songs, vocab, TokenStream::pitch)));
    write_text(fs::path(csv_dir) / "duration_transitions.csv",
               to_csv(transition_stats(songs, vocab, TokenStream::duration)));
  }
  out << stats_report_json(songs, vocab) << "\n";
  return ok;
}

struct TrainArgs {
  std::string dir;
  std::string out = "checkpoint.json";
  std::string report;
  std::string state;
  bool resume = false;
  TrainConfig config;
  double clip = 0.0;
};

int run_train(TrainArgs a, const Globals& g, std::ostream& out, std::ostream& err) {
  a.config.seed = g.seed;
  if (a.clip > 0.0) a.config.clip_norm = a.clip;
  a.config.warn = [&err, &g](const std::string& m) {
    if (!g.quiet) err << "warning: " << m << "\n";
  };
  try {
    a.config.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return usage_error;
  }
  if (a.resume && a.state.empty()) {
    err << "error: --resume needs --state\n";
    return usage_error;
  }

  const auto corpus = load_corpus(a.dir);
  if (corpus.scores.size() < 2) throw DataError("training needs at least two parsed tunes");
  PreparedCorpus prepared;
  try {
    prepared = prepare_corpus(corpus.scores, a.config.split, a.config.seed);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  TrainingState state;
  if (a.resume && fs::exists(a.state)) {
    try {
      state = training_state_from_json(json::parse(read_file(a.state)));
    } catch (const json::exception& e) {
      throw DataError(a.state + ": " + e.what());
    } catch (const CheckpointError& e) {
      throw DataError(a.state + ": " + e.what());
    }
    if (state.current.meta.corpus_hash != corpus_hash(prepared.train) || !(state.current.vocab == prepared.vocab)) {
      throw DataError("training state does not belong to this corpus and seed");
    }
  } else {
    state = begin_training(prepared.vocab, prepared.train, prepared.test, a.config);
    state.report.excluded_test_songs = prepared.excluded_test;
  }
  if (!g.quiet && prepared.excluded_test > 0) {
    err << "warning: " << prepared.excluded_test << " test songs use tokens unseen in training and are ignored\n";
  }

  std::ofstream report;
  if (!a.report.empty()) {
    report.open(a.report, a.resume ? std::ios::app : std::ios::trunc);
    if (!report) throw DataError("cannot write " + a.report);
  }
  while (static_cast<int>(state.report.epochs.size()) < a.config.epochs) {
    const auto& record = run_epoch(state, prepared.train, prepared.test, a.config);
    const auto line = to_json_line(record);
    if (!g.quiet) out << line << "\n" << std::flush;
    if (report) report << line << "\n" << std::flush;
    if (!a.state.empty()) write_text(a.state, training_state_to_json(state).dump() + "\n");
    write_text(a.out, serialize_model(state.best));
  }
  write_text(a.out, serialize_model(state.best));
  if (!g.quiet) {
    err << "best epoch " << state.report.best_epoch << ", checkpoint written to " << a.out << "\n";
  }
  return ok;
}

int run_eval(const std::string& ckpt, const std::string& dir, const Globals& g, std::ostream& out) {
  const auto model = load_checkpoint(ckpt);
  const auto corpus = load_corpus(dir);
  std::vector<EncodedSong> songs;
  std::size_t excluded = 0;
  for (const auto& s : corpus.scores) {
    try {
      songs.push_back(encode_song(normalize_score(s).score, model.vocab));
    } catch (const OutOfVocabularyError&) {
      ++excluded;
    }
  }
  if (songs.empty()) throw DataError("no tune can be encoded with the checkpoint vocabulary");
  const auto nll = evaluate_all(model, songs);
  if (g.json) {
    out << nlohmann::ordered_json{{"songs", songs.size()},      {"excluded", excluded},
                                  {"rhythm_nll", nll.rhythm},    {"melody_nll", nll.melody}}
               .dump()
        << "\n";
  } else {
    out << "songs " << songs.size() << " (excluded " << excluded << "), rhythm NLL " << nll.rhythm
        << ", melody NLL " << nll.melody << "\n";
  }
  return ok;
}

struct GenerateArgs {
  std::string ckpt;
  int n = 1;
  double temperature = 1.0;
  int max_notes = 1000;
  std::string first_notes;
  std::string stats_path;
};

int run_generate(const GenerateArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  const auto model = load_checkpoint(a.ckpt);
  GenerationConfig config;
  config.rng_seed = g.seed;
  config.num_samples = a.n;
  config.temperature = a.temperature;
  config.max_notes = a.max_notes;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return usage_error;
  }
  std::optional<std::array<std::pair<int, int>, 2>> first;
  if (!a.first_notes.empty()) first = parse_first_notes(a.first_notes, model.vocab);
  if (!first && model.openings.empty()) throw DataError("checkpoint has no opening table; pass --first-notes");
  const auto batch = batch_generate(model, config, first);

  const abc::KeySignature key('C', 0, abc::Mode::major);
  json songs = json::array();
  for (std::size_t i = 0; i < batch.songs.size(); ++i) {
    const auto& s = batch.songs[i];
    const auto text = generated_abc(model, s, static_cast<int>(i) + 1, Rational(1, 8), 0, key, std::nullopt,
                                    Rational(1, 8), "Generated " + std::to_string(i + 1));
    if (g.json) {
      songs.push_back(json{{"abc", text}, {"notes", s.note_count()}, {"terminated", to_string(s.terminated)}});
    } else {
      out << text << "\n";
    }
  }
  const auto stats = to_json(batch.stats);
  if (g.json) {
    out << json{{"songs", std::move(songs)}, {"stats", json::parse(stats)}}.dump() << "\n";
  } else if (!g.quiet) {
    err << stats << "\n";
  }
  if (!a.stats_path.empty()) write_text(a.stats_path, stats + "\n");
  return ok;
}

struct ContinueArgs {
  std::string ckpt;
  std::string seed_abc;
  int n = 1;
  int length = 0;  // 0: run to the song ending or the global cap
  double temperature = 1.0;
};

int run_continue(const ContinueArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  const auto model = load_checkpoint(a.ckpt);
  std::string text;
  try {
    text = read_file(a.seed_abc);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  const auto parsed = abc::parse_corpus(text);
  if (parsed.scores.empty()) {
    if (!parsed.skipped.empty()) {
      throw DataError("seed tune rejected: " + parsed.skipped.front().reason + ": " + parsed.skipped.front().detail);
    }
    throw DataError("no tunes found in " + a.seed_abc);
  }
  const auto& score = parsed.scores.front();
  const auto normalized = normalize_score(score);
  EncodedSong seed;
  try {
    seed = encode_prefix(normalized.score, model.vocab);
  } catch (const OutOfVocabularyError& e) {
    throw DataError(e.what());
  }

  GenerationConfig config;
  config.temperature = a.temperature;
  config.max_notes = a.length > 0 ? static_cast<int>(seed.size()) + a.length : 1000;
  if (a.n < 1) {
    err << "error: -n must be at least 1\n";
    return usage_error;
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return usage_error;
  }
  std::mt19937_64 rng(g.seed);
  json songs = json::array();
  for (int i = 0; i < a.n; ++i) {
    const auto song = continue_song(model, seed, config, rng);
    const auto text_out =
        generated_abc(model, song, i + 1, normalized.base, -normalized.shift, score.header.key, score.header.meter,
                      score.header.unit_note_length, score.header.title + " (continuation " + std::to_string(i + 1) + ")");
    if (g.json) {
      songs.push_back(json{{"abc", text_out}, {"seed_len", song.seed_len}, {"notes", song.note_count()},
                           {"terminated", to_string(song.terminated)}, {"probs", song.note_probs}});
    } else {
      out << text_out << "\n";
    }
  }
  if (g.json) out << json{{"continuations", std::move(songs)}}.dump() << "\n";
  return ok;
}

int run_serve(const std::string& ckpt, const std::string& host, int port, int ttl, const Globals& g,
              std::ostream& err) {
  auto model = load_checkpoint(ckpt);
  service::Service svc(std::move(model), g.seed, std::chrono::seconds(ttl));
  service::HttpServer server(svc);
  const int actual = service::resolve_port(port);
  if (!server.bind(host, actual)) throw DataError("cannot bind " + host + ":" + std::to_string(actual));
  if (!g.quiet) err << "listening on http://" << host << ":" << actual << "\n" << std::flush;
  server.listen_after_bind();
  return ok;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Melody composition with coupled rhythm and melody GRU networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_flag("--json", g.json, "Machine-readable output");

  std::string dir;
  std::string skips_path;
  auto* parse = app.add_subcommand("parse", "Parse a corpus and report skipped tunes");
  parse->add_option("dir", dir, "Directory of .abc files, or one file")->required();
  parse->add_option("--skips", skips_path, "Write the skip report (JSON lines) here");

  std::string csv_dir;
  auto* stats = app.add_subcommand("stats", "Corpus statistics and transition matrices");
  stats->add_option("dir", dir, "Directory of .abc files, or one file")->required();
  stats->add_option("--csv-dir", csv_dir, "Write transition matrices as CSV here");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train both networks");
  train_cmd->add_option("dir", ta.dir, "Directory of .abc files, or one file")->required();
  train_cmd->add_option("--epochs", ta.config.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--hidden", ta.config.hidden_size, "Units per hidden layer")->capture_default_str();
  train_cmd->add_option("--layers", ta.config.layers, "Hidden layers")->capture_default_str();
  train_cmd->add_option("--songs-per-epoch", ta.config.songs_per_epoch)->capture_default_str();
  train_cmd->add_option("--eval-sample", ta.config.eval_sample)->capture_default_str();
  train_cmd->add_option("--split", ta.config.split, "Training fraction")->capture_default_str();
  train_cmd->add_option("--clip-norm", ta.clip, "Gradient max-norm (off when 0)");
  train_cmd->add_flag("--independent-schedules", ta.config.independent_schedules);
  train_cmd->add_option("--out", ta.out, "Checkpoint path")->capture_default_str();
  train_cmd->add_option("--report", ta.report, "Epoch report (JSON lines)");
  train_cmd->add_option("--state", ta.state, "Resumable training state, rewritten every epoch");
  train_cmd->add_flag("--resume", ta.resume, "Continue from --state when it exists");

  std::string ckpt;
  auto* eval = app.add_subcommand("eval", "Teacher-forced NLL of a corpus");
  eval->add_option("checkpoint", ckpt)->required();
  eval->add_option("dir", dir)->required();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Sample new songs");
  gen->add_option("checkpoint", ga.ckpt)->required();
  gen->add_option("-n", ga.n, "Number of songs")->capture_default_str();
  gen->add_option("--temp", ga.temperature, "Sampling temperature")->capture_default_str();
  gen->add_option("--max-notes", ga.max_notes)->capture_default_str();
  gen->add_option("--first-notes", ga.first_notes, "Two notes as pitch:duration,pitch:duration");
  gen->add_option("--stats", ga.stats_path, "Write batch statistics JSON here");

  ContinueArgs ca;
  auto* cont = app.add_subcommand("continue", "Continue a seed melody");
  cont->add_option("checkpoint", ca.ckpt)->required();
  cont->add_option("--seed-abc", ca.seed_abc, "abc file holding the seed tune")->required();
  cont->add_option("-n", ca.n, "Number of continuations")->capture_default_str();
  cont->add_option("--length", ca.length, "New notes per continuation (0: until the song ends)");
  cont->add_option("--temp", ca.temperature)->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 8080;
  int ttl = 3600;
  auto* serve = app.add_subcommand("serve", "HTTP service for the composer UI");
  serve->add_option("checkpoint", ckpt)->required();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--ttl", ttl, "Session idle timeout in seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage_error;
  }

  try {
    if (*parse) return run_parse(dir, skips_path, g, out);
    if (*stats) return run_stats(dir, csv_dir, out);
    if (*train_cmd) return run_train(ta, g, out, err);
    if (*eval) return run_eval(ckpt, dir, g, out);
    if (*gen) return run_generate(ga, g, out, err);
    if (*cont) return run_continue(ca, g, out, err);
    if (*serve) return run_serve(ckpt, host, port, ttl, g, err);
  } catch (const gru::NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return numeric_error;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const abc::AbcError& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  }
  return usage_error;
}

}  // namespace folkgen::cli
