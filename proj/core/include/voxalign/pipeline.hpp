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

#ifndef VOXALIGN_PIPELINE_HPP
#define VOXALIGN_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxalign/alignment.hpp"
#include "voxalign/annotation.hpp"
#include "voxalign/mel.hpp"
#include "voxalign/svd.hpp"

// The matching / teacher-student orchestration: pair each annotation file
// with its best audio candidate, turn the matches into a training set under
// a target policy, train students, and evaluate frame accuracy on
// artist-disjoint splits.

namespace voxalign {

struct ManifestEntry {
  std::string song_id;
  std::string annotation_path;
  std::vector<std::string> candidate_paths;
  std::string artist_name;
};

// JSON-lines, one object per song:
// {"song_id":..., "annotation":..., "candidates":[...], "artist":...}
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

struct LabeledEntry {
  std::string song_id;
  std::string audio_path;
  std::string annotation_path;  // its own timing is the ground truth
};

// JSON-lines: {"song_id":..., "audio":..., "annotation":...}
std::vector<LabeledEntry> read_labeled_manifest(
    const std::filesystem::path& path);
void write_labeled_manifest(const std::filesystem::path& path,
                            const std::vector<LabeledEntry>& entries);

enum class MatchStatus { kMatched, kRejected, kFailed };

struct MatchOutcome {
  std::string song_id;
  MatchStatus status = MatchStatus::kFailed;
  std::string candidate_id;  // chosen (matched) or best-scoring (rejected)
  AlignmentResult result;
  std::string aligned_path;      // matched only, relative to the run dir
  std::string predictions_path;  // matched only, relative to the run dir
  std::string error;             // failed only
};

struct PipelineOptions {
  MelConfig mel;
  SearchConfig search;
  int median_width = 9;
  int jobs = 1;
  bool cache_mel = false;
  std::filesystem::path run_dir;
};

// Predicts p(t) for every candidate of every song, searches the alignment,
// and keeps the best candidate at or above t_corr. Matched songs get their
// adapted annotation and prediction curve written under the run dir.
// Per-song failures are journaled and skipped. The journal makes reruns
// resumable and idempotent; entries are committed in manifest order no
// matter how many worker threads run.
std::vector<MatchOutcome> run_matching(
    const std::vector<ManifestEntry>& manifest, const SvdModel& teacher,
    const PipelineOptions& opts);

std::vector<MatchOutcome> read_journal(const std::filesystem::path& path);

enum class TargetPolicyKind {
  kTeacherPredictions,   // target = teacher's p(t)
  kAlignedAnnotations,   // target = avs(t) under the corrected timing
  kAgreement,            // avs targets, frames masked where |p - avs| > tol
};

struct TargetPolicy {
  TargetPolicyKind kind = TargetPolicyKind::kAlignedAnnotations;
  double agreement_tolerance = 0.5;
};

TargetPolicyKind parse_policy_kind(const std::string& name);  // ConfigError
std::string policy_kind_name(TargetPolicyKind kind);

// One training example per analysis frame of every source track (subsampled
// by `frame_stride`), patches materialized on demand.
class FrameTrainingSource : public TrainingSource {
 public:
  struct TrackInfo {
    std::string song_id;
    std::size_t frames = 0;
    std::size_t examples = 0;
    double positive_weight_fraction = 0.0;
  };

  static std::unique_ptr<FrameTrainingSource> from_matches(
      const std::vector<MatchOutcome>& outcomes, const TargetPolicy& policy,
      const PipelineOptions& opts, std::size_t frame_stride = 1);

  static std::unique_ptr<FrameTrainingSource> from_labeled(
      const std::vector<LabeledEntry>& entries, const MelConfig& mel,
      std::size_t frame_stride = 1);

  std::size_t size() const override { return total_examples_; }
  TrainingExample example(std::size_t index) const override;
  const std::vector<TrackInfo>& tracks() const { return infos_; }

 private:
  struct Track {
    MelSpectrogram spec;
    std::vector<double> targets;
    std::vector<double> weights;
    std::size_t first_example = 0;
    std::size_t examples = 0;
  };

  void index_tracks();

  std::vector<Track> tracks_;
  std::vector<TrackInfo> infos_;
  std::size_t stride_ = 1;
  std::size_t total_examples_ = 0;
};

// Spec-level entry point; throws DataError when `outcomes` has no matches
// or a policy needs prediction curves that were never cached.
std::unique_ptr<FrameTrainingSource> build_training_set(
    const std::vector<MatchOutcome>& outcomes, const TargetPolicy& policy,
    const PipelineOptions& opts, std::size_t frame_stride = 1);

struct SplitItem {
  std::string id;
  std::string artist_name;
};

// Splits items so that no artist appears on both sides; the test share lands
// within one artist group of test_fraction. Deterministic in the seed.
std::pair<std::vector<std::string>, std::vector<std::string>>
artist_filter_split(const std::vector<SplitItem>& items, double test_fraction,
                    std::uint64_t seed);

// Fraction of frames where (p >= threshold) equals the label; a prediction
// exactly at the threshold counts as voiced. Labels on a different hop are
// resampled by nearest frame; a residual length gap > 2 frames is a
// LengthError.
double frame_accuracy(const PredictionSequence& pred,
                      const VoiceSequence& truth, double threshold);

struct EvalReport {
  struct Track {
    std::string id;
    std::size_t frames = 0;
    double accuracy = 0.0;
  };
  std::vector<Track> tracks;
  double mean = 0.0;  // unweighted average over tracks
  double threshold = 0.5;
};

EvalReport evaluate_frame_accuracy(const SvdModel& model,
                                   const std::vector<LabeledEntry>& entries,
                                   double threshold, const MelConfig& mel,
                                   int median_width);

std::string format_eval_report(const EvalReport& report);

struct IterateOptions {
  PipelineOptions pipeline;  // run_dir is the run root; rounds get subdirs
  TargetPolicy policy;
  TrainHyper trainer;
  ArchitectureConfig student_arch = ArchitectureConfig::default_config();
  std::size_t frame_stride = 1;
  double eval_threshold = 0.5;
  std::vector<LabeledEntry> eval_entries;  // empty disables evaluation
};

struct RoundResult {
  int round = 0;
  std::size_t match_count = 0;
  SvdModel model;
  EvalReport eval;
};

// Teacher-student rounds: round k matches with the round k-1 model, builds
// the training set, trains a fresh student and evaluates it. Every round
// persists its journal, reports and model under round_%03d/. A round with
// zero matches raises EmptyRoundError.
std::vector<RoundResult> iterate(const std::vector<ManifestEntry>& manifest,
                                 const SvdModel& teacher,
                                 const IterateOptions& opts, int rounds);

std::filesystem::path round_directory(const std::filesystem::path& run_dir,
                                      int round);

}  // namespace voxalign

#endif  // VOXALIGN_PIPELINE_HPP
