// Copyright 2026 The voxalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// voxalign: match karaoke annotation files against audio candidates with a
// singing-voice detector, adapt their timing, and bootstrap better detectors
// from the matches.
//
// Exit codes: 0 success (align: match at or above threshold), 1 align below
// threshold, 2 syntax/config/IO error, 3 invariant violation, 4 empty round.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "voxalign/alignment.hpp"
#include "voxalign/annotation.hpp"
#include "voxalign/audio.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/mel.hpp"
#include "voxalign/pipeline.hpp"
#include "voxalign/run_config.hpp"
#include "voxalign/svd.hpp"
#include "voxalign/version.hpp"

namespace {

namespace fs = std::filesystem;
using namespace voxalign;

constexpr int kExitOk = 0;
constexpr int kExitBelowThreshold = 1;
constexpr int kExitInputError = 2;
constexpr int kExitInvariantError = 3;
constexpr int kExitEmptyRound = 4;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const EmptyRoundError*>(&e) != nullptr)
    return kExitEmptyRound;
  if (dynamic_cast<const InvariantError*>(&e) != nullptr)
    return kExitInvariantError;
  return kExitInputError;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

RunConfig load_config(const std::string& config_path,
                      const std::vector<std::string>& overrides, int jobs,
                      std::int64_t seed, int rounds) {
  RunConfig cfg = config_path.empty() ? RunConfig{}
                                      : RunConfig::from_file(config_path);
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got \"" + kv + "\"");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (jobs >= 0) cfg.jobs = jobs;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (rounds >= 0) cfg.rounds = rounds;
  cfg.finalize();
  return cfg;
}

int cmd_validate(const std::string& annotation_path) {
  std::string text;
  try {
    text = read_text_file(annotation_path);
  } catch (const std::exception& e) {
    std::cerr << "voxalign: " << e.what() << "\n";
    return kExitInputError;
  }
  try {
    parse_annotation_file(text);
  } catch (const SyntaxError& e) {
    std::cout << e.line() << "\tsyntax\t" << e.what() << "\n";
    std::cerr << "voxalign: " << annotation_path << ": " << e.what() << "\n";
    return kExitInputError;
  } catch (const InvariantError& e) {
    std::cout << 0 << "\tinvariant\t" << e.what() << "\n";
    std::cerr << "voxalign: " << annotation_path << ": " << e.what() << "\n";
    return kExitInvariantError;
  }
  return kExitOk;
}

int cmd_align(const std::string& annotation_path, const std::string& audio_path,
              const std::string& model_path, const RunConfig& cfg) {
  const AnnotationFile file =
      parse_annotation_file(read_text_file(annotation_path));
  const SvdModel model = load_model(model_path);
  const AudioBuffer audio = decode_audio(audio_path, cfg.mel.sample_rate);
  const MelSpectrogram spec = compute_mel_spectrogram(audio, cfg.mel);
  const PredictionSequence pred =
      predict_sequence(model, spec, cfg.median_width);
  const AlignmentResult result = search_alignment(file, pred, cfg.search);

  const std::string song_id = fs::path(annotation_path).stem().string();
  std::cout << format_alignment_record(song_id, audio_path, result) << "\n";
  return result.score >= cfg.search.t_corr ? kExitOk : kExitBelowThreshold;
}

void write_run_metadata(const RunConfig& cfg) {
  fs::create_directories(cfg.run_path());
  std::ofstream out(cfg.run_path() / "config.txt",
                    std::ios::binary | std::ios::trunc);
  out << cfg.canonical();
}

void print_run_record(const RunConfig& cfg) {
  std::cout << "run\t" << cfg.run_path().string() << "\n";
}

std::vector<MatchOutcome> journal_or_fail(const fs::path& round_dir) {
  const fs::path journal = round_dir / "journal.jsonl";
  if (!fs::exists(journal))
    throw DataError("no journal at " + journal.string() +
                    "; run `voxalign match` first");
  return read_journal(journal);
}

void write_training_summary(const fs::path& round_dir,
                            const FrameTrainingSource& source) {
  std::string out;
  for (const auto& t : source.tracks()) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.6f", t.positive_weight_fraction);
    out += t.song_id + "\t" + std::to_string(t.frames) + "\t" +
           std::to_string(t.examples) + "\t" + frac + "\n";
  }
  std::ofstream f(round_dir / "training_set.tsv",
                  std::ios::binary | std::ios::trunc);
  f << out;
}

TargetPolicy policy_of(const RunConfig& cfg) {
  TargetPolicy policy;
  policy.kind = parse_policy_kind(cfg.policy);
  policy.agreement_tolerance = cfg.agreement_tolerance;
  return policy;
}

int cmd_match(const RunConfig& cfg) {
  const auto manifest = read_manifest(cfg.manifest);
  const SvdModel teacher = load_model(cfg.model_in);
  write_run_metadata(cfg);
  const fs::path round1 = round_directory(cfg.run_path(), 1);
  fs::create_directories(round1);
  const auto outcomes =
      run_matching(manifest, teacher, cfg.pipeline_options(round1));

  std::size_t matched = 0, rejected = 0, failed = 0;
  for (const MatchOutcome& o : outcomes) {
    if (o.status == MatchStatus::kMatched) ++matched;
    else if (o.status == MatchStatus::kRejected) ++rejected;
    else ++failed;
  }
  std::cerr << "voxalign: matched " << matched << ", rejected " << rejected
            << ", failed " << failed << " of " << outcomes.size() << " songs\n";
  print_run_record(cfg);
  return kExitOk;
}

int cmd_build_set(const RunConfig& cfg) {
  write_run_metadata(cfg);
  const fs::path round1 = round_directory(cfg.run_path(), 1);
  const auto outcomes = journal_or_fail(round1);
  const auto source = build_training_set(
      outcomes, policy_of(cfg), cfg.pipeline_options(round1), cfg.frame_stride);
  write_training_summary(round1, *source);
  std::cerr << "voxalign: training set covers " << source->tracks().size()
            << " tracks, " << source->size() << " examples\n";
  print_run_record(cfg);
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  write_run_metadata(cfg);
  const fs::path round1 = round_directory(cfg.run_path(), 1);
  fs::create_directories(round1);

  std::unique_ptr<FrameTrainingSource> source;
  if (cfg.train_source == "labeled") {
    if (cfg.labeled_manifest.empty())
      throw ConfigError("train.source=labeled needs labeled_manifest");
    source = FrameTrainingSource::from_labeled(
        read_labeled_manifest(cfg.labeled_manifest), cfg.mel,
        cfg.frame_stride);
  } else {
    source = build_training_set(journal_or_fail(round1), policy_of(cfg),
                                cfg.pipeline_options(round1),
                                cfg.frame_stride);
  }

  SvdModel model = init_model(cfg.architecture(), cfg.trainer.seed);
  {
    std::ofstream log(round1 / "train.log", std::ios::binary | std::ios::trunc);
    model = train(std::move(model), *source, cfg.trainer, &log);
  }
  save_model(model, round1 / "model.svdm");
  std::cerr << "voxalign: trained on " << source->size()
            << " examples, model written to "
            << (round1 / "model.svdm").string() << "\n";
  print_run_record(cfg);
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg) {
  if (cfg.eval_manifest.empty())
    throw ConfigError("evaluate needs eval_manifest");
  write_run_metadata(cfg);
  const fs::path round1 = round_directory(cfg.run_path(), 1);
  const fs::path round_model = round1 / "model.svdm";
  const SvdModel model = fs::exists(round_model) ? load_model(round_model)
                                                 : load_model(cfg.model_in);
  const auto entries = read_labeled_manifest(cfg.eval_manifest);
  const EvalReport report = evaluate_frame_accuracy(
      model, entries, cfg.eval_threshold, cfg.mel, cfg.median_width);
  fs::create_directories(round1);
  std::ofstream out(round1 / "eval.tsv", std::ios::binary | std::ios::trunc);
  out << format_eval_report(report);
  std::cerr << "voxalign: mean frame accuracy " << report.mean * 100.0
            << "% over " << report.tracks.size() << " tracks\n";
  print_run_record(cfg);
  return kExitOk;
}

int cmd_bootstrap(const RunConfig& cfg) {
  const auto manifest = read_manifest(cfg.manifest);
  const SvdModel teacher = load_model(cfg.model_in);
  write_run_metadata(cfg);

  IterateOptions opts;
  opts.pipeline = cfg.pipeline_options(cfg.run_path());
  opts.policy = policy_of(cfg);
  opts.trainer = cfg.trainer;
  opts.student_arch = cfg.architecture();
  opts.frame_stride = cfg.frame_stride;
  opts.eval_threshold = cfg.eval_threshold;
  if (!cfg.eval_manifest.empty())
    opts.eval_entries = read_labeled_manifest(cfg.eval_manifest);

  const auto results = iterate(manifest, teacher, opts, cfg.rounds);
  for (const RoundResult& r : results) {
    std::cerr << "voxalign: round " << r.round << ": " << r.match_count
              << " matches";
    if (!r.eval.tracks.empty())
      std::cerr << ", eval accuracy " << r.eval.mean * 100.0 << "%";
    std::cerr << "\n";
    // Mirror the single-round artifact layout.
    const fs::path round_dir = round_directory(cfg.run_path(), r.round);
    const auto outcomes = read_journal(round_dir / "journal.jsonl");
    const auto source =
        build_training_set(outcomes, policy_of(cfg),
                           cfg.pipeline_options(round_dir), cfg.frame_stride);
    write_training_summary(round_dir, *source);
  }
  print_run_record(cfg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"karaoke-annotation to audio alignment and singing-voice "
               "detector bootstrapping"};
  app.set_version_flag("--version", std::string("voxalign ") + kVersion +
                                        " (config hash: " +
                                        kConfigHashAlgorithm + ")");
  app.require_subcommand(1);

  std::string annotation_path, audio_path, model_path, config_path;
  std::vector<std::string> overrides;
  int jobs = -1;
  std::int64_t seed = -1;
  int rounds = -1;

  CLI::App* validate_cmd =
      app.add_subcommand("validate", "parse and check one annotation file");
  validate_cmd->add_option("annotation", annotation_path)->required();

  CLI::App* align_cmd = app.add_subcommand(
      "align", "score one annotation file against one audio file");
  align_cmd->add_option("annotation", annotation_path)->required();
  align_cmd->add_option("audio", audio_path)->required();
  align_cmd->add_option("model", model_path)->required();
  align_cmd->add_option("--config", config_path, "run configuration file");
  align_cmd->add_option("--set", overrides, "override config key=value");

  auto add_pipeline_cmd = [&](const char* name, const char* help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", config_path, "run configuration file")
        ->required();
    cmd->add_option("--set", overrides, "override config key=value");
    cmd->add_option("--jobs", jobs, "worker threads (default: core count)");
    cmd->add_option("--seed", seed, "override the run seed");
    cmd->add_option("--rounds", rounds, "override bootstrap rounds");
    return cmd;
  };
  CLI::App* match_cmd = add_pipeline_cmd(
      "match", "select the best audio candidate for every song");
  CLI::App* build_set_cmd = add_pipeline_cmd(
      "build-set", "summarize the training set implied by the match journal");
  CLI::App* train_cmd =
      add_pipeline_cmd("train", "train a detector on matches or labeled data");
  CLI::App* evaluate_cmd =
      add_pipeline_cmd("evaluate", "frame accuracy on a labeled manifest");
  CLI::App* bootstrap_cmd = add_pipeline_cmd(
      "bootstrap", "run teacher-student rounds of match/build/train/evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "voxalign: " << e.what() << "\n\n" << app.help();
    return kExitInputError;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(annotation_path);
    if (align_cmd->parsed()) {
      const RunConfig cfg =
          load_config(config_path, overrides, jobs, seed, rounds);
      return cmd_align(annotation_path, audio_path, model_path, cfg);
    }
    const RunConfig cfg =
        load_config(config_path, overrides, jobs, seed, rounds);
    if (match_cmd->parsed()) return cmd_match(cfg);
    if (build_set_cmd->parsed()) return cmd_build_set(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (evaluate_cmd->parsed()) return cmd_evaluate(cfg);
    if (bootstrap_cmd->parsed()) return cmd_bootstrap(cfg);
  } catch (const std::exception& e) {
    std::cerr << "voxalign: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitInputError;
}
