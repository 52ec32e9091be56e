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

#include "voxalign/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "json.hpp"

#include "internal_util.hpp"
#include "voxalign/audio.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/rng.hpp"

namespace voxalign {

namespace {

using Json = nlohmann::ordered_json;

bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '.' || c == '_' || c == '-';
  });
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) eol = data.size();
    std::string line = data.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    pos = eol + 1;
  }
  return lines;
}

const char* status_name(MatchStatus s) {
  switch (s) {
    case MatchStatus::kMatched: return "matched";
    case MatchStatus::kRejected: return "rejected";
    case MatchStatus::kFailed: return "failed";
  }
  return "failed";
}

std::string journal_line(const MatchOutcome& o) {
  Json j;
  j["song_id"] = o.song_id;
  j["status"] = status_name(o.status);
  if (o.status != MatchStatus::kFailed) {
    j["candidate"] = o.candidate_id;
    j["score"] = o.result.score;
    j["o_hat"] = o.result.o_hat;
    j["fr_hat"] = o.result.fr_hat;
    j["overlap"] = o.result.n_overlap_frames;
  }
  if (o.status == MatchStatus::kMatched) {
    j["aligned"] = o.aligned_path;
    j["predictions"] = o.predictions_path;
  }
  if (o.status == MatchStatus::kFailed) j["error"] = o.error;
  return j.dump();
}

MatchOutcome parse_journal_line(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad journal line: ") + e.what());
  }
  try {
    MatchOutcome o;
    o.song_id = j.at("song_id").get<std::string>();
    const std::string status = j.at("status").get<std::string>();
    if (status == "matched") o.status = MatchStatus::kMatched;
    else if (status == "rejected") o.status = MatchStatus::kRejected;
    else if (status == "failed") o.status = MatchStatus::kFailed;
    else throw FormatError("bad journal status " + status);
    if (o.status != MatchStatus::kFailed) {
      o.candidate_id = j.at("candidate").get<std::string>();
      o.result.score = j.at("score").get<double>();
      o.result.o_hat = j.at("o_hat").get<double>();
      o.result.fr_hat = j.at("fr_hat").get<double>();
      o.result.n_overlap_frames = j.at("overlap").get<std::int64_t>();
    }
    if (o.status == MatchStatus::kMatched) {
      o.aligned_path = j.at("aligned").get<std::string>();
      o.predictions_path = j.at("predictions").get<std::string>();
    }
    if (o.status == MatchStatus::kFailed)
      o.error = j.at("error").get<std::string>();
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad journal line: ") + e.what());
  }
}

MelSpectrogram load_spectrogram(const std::filesystem::path& audio_path,
                                const PipelineOptions& opts) {
  if (opts.cache_mel) {
    char name[32];
    std::snprintf(name, sizeof(name), "%016llx.mels",
                  static_cast<unsigned long long>(
                      detail::fnv1a64(audio_path.string())));
    const std::filesystem::path cached = opts.run_dir / "mels" / name;
    if (std::filesystem::exists(cached)) return read_mel_cache(cached);
    const AudioBuffer audio = decode_audio(audio_path, opts.mel.sample_rate);
    MelSpectrogram spec = compute_mel_spectrogram(audio, opts.mel);
    std::filesystem::create_directories(cached.parent_path());
    write_mel_cache(cached, spec);
    return spec;
  }
  const AudioBuffer audio = decode_audio(audio_path, opts.mel.sample_rate);
  return compute_mel_spectrogram(audio, opts.mel);
}

struct SongResult {
  MatchOutcome outcome;
  std::string report_rows;
};

SongResult process_song(const ManifestEntry& entry, const SvdModel& teacher,
                        const PipelineOptions& opts) {
  SongResult out;
  out.outcome.song_id = entry.song_id;
  AnnotationFile file;
  try {
    file = parse_annotation_file(detail::read_file(entry.annotation_path));
  } catch (const std::exception& e) {
    out.outcome.status = MatchStatus::kFailed;
    out.outcome.error = std::string("annotation: ") + e.what();
    return out;
  }

  std::vector<std::pair<std::string, AlignmentResult>> scored;
  std::map<std::string, PredictionSequence> predictions;
  std::string first_error;
  for (const std::string& candidate : entry.candidate_paths) {
    try {
      const MelSpectrogram spec = load_spectrogram(candidate, opts);
      PredictionSequence pred =
          predict_sequence(teacher, spec, opts.median_width);
      const AlignmentResult result = search_alignment(file, pred, opts.search);
      out.report_rows +=
          format_alignment_record(entry.song_id, candidate, result) + "\n";
      scored.emplace_back(candidate, result);
      predictions.emplace(candidate, std::move(pred));
    } catch (const std::exception& e) {
      if (first_error.empty())
        first_error = candidate + ": " + e.what();
    }
  }

  if (scored.empty()) {
    out.outcome.status = MatchStatus::kFailed;
    out.outcome.error =
        first_error.empty() ? "no candidates" : first_error;
    return out;
  }

  const auto best = select_best_candidate(scored, opts.search);
  if (!best) {
    // Keep the best failing score for the journal.
    const std::pair<std::string, AlignmentResult>* top = &scored.front();
    for (const auto& entry_score : scored) {
      if (entry_score.second.score > top->second.score ||
          (entry_score.second.score == top->second.score &&
           entry_score.first < top->first))
        top = &entry_score;
    }
    out.outcome.status = MatchStatus::kRejected;
    out.outcome.candidate_id = top->first;
    out.outcome.result = top->second;
    return out;
  }

  if (best->second.score < opts.search.t_corr)
    throw InvariantError("selected candidate below threshold");

  out.outcome.status = MatchStatus::kMatched;
  out.outcome.candidate_id = best->first;
  out.outcome.result = best->second;
  out.outcome.aligned_path = "aligned/" + entry.song_id + ".txt";
  out.outcome.predictions_path = "predictions/" + entry.song_id + ".mels";

  const AnnotationFile adapted =
      adapt_timing(file, best->second.o_hat, best->second.fr_hat);
  detail::write_file(opts.run_dir / out.outcome.aligned_path,
                     serialize_annotation_file(adapted));
  const PredictionSequence& chosen = predictions.at(best->first);
  write_curve_cache(opts.run_dir / out.outcome.predictions_path, chosen.probs,
                    chosen.hop_seconds);
  return out;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  int line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    Json j;
    try {
      j = Json::parse(line);
      ManifestEntry e;
      e.song_id = j.at("song_id").get<std::string>();
      e.annotation_path = j.at("annotation").get<std::string>();
      e.candidate_paths = j.at("candidates").get<std::vector<std::string>>();
      e.artist_name = j.at("artist").get<std::string>();
      if (!valid_id(e.song_id))
        throw ManifestError("line " + std::to_string(line_no) +
                            ": song_id must be [A-Za-z0-9._-]+");
      if (!seen.insert(e.song_id).second)
        throw ManifestError("duplicate song_id " + e.song_id);
      if (e.annotation_path.empty() || e.candidate_paths.empty())
        throw ManifestError("line " + std::to_string(line_no) +
                            ": missing annotation or candidates");
      for (const std::string& c : e.candidate_paths)
        if (c.empty())
          throw ManifestError("line " + std::to_string(line_no) +
                              ": empty candidate path");
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const ManifestEntry& e : entries) {
    Json j;
    j["song_id"] = e.song_id;
    j["annotation"] = e.annotation_path;
    j["candidates"] = e.candidate_paths;
    j["artist"] = e.artist_name;
    out += j.dump() + "\n";
  }
  detail::write_file(path, out);
}

std::vector<LabeledEntry> read_labeled_manifest(
    const std::filesystem::path& path) {
  std::vector<LabeledEntry> entries;
  int line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    try {
      Json j = Json::parse(line);
      LabeledEntry e;
      e.song_id = j.at("song_id").get<std::string>();
      e.audio_path = j.at("audio").get<std::string>();
      e.annotation_path = j.at("annotation").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

void write_labeled_manifest(const std::filesystem::path& path,
                            const std::vector<LabeledEntry>& entries) {
  std::string out;
  for (const LabeledEntry& e : entries) {
    Json j;
    j["song_id"] = e.song_id;
    j["audio"] = e.audio_path;
    j["annotation"] = e.annotation_path;
    out += j.dump() + "\n";
  }
  detail::write_file(path, out);
}

std::vector<MatchOutcome> read_journal(const std::filesystem::path& path) {
  std::vector<MatchOutcome> outcomes;
  for (const std::string& line : read_lines(path))
    outcomes.push_back(parse_journal_line(line));
  return outcomes;
}

std::vector<MatchOutcome> run_matching(
    const std::vector<ManifestEntry>& manifest, const SvdModel& teacher,
    const PipelineOptions& opts) {
  if (manifest.empty()) throw ManifestError("manifest has no entries");
  if (opts.search.hop_seconds != opts.mel.hop_seconds())
    throw ConfigError("search hop does not match the feature hop");
  validate(opts.search);

  std::filesystem::create_directories(opts.run_dir / "aligned");
  std::filesystem::create_directories(opts.run_dir / "predictions");

  const std::filesystem::path journal_path = opts.run_dir / "journal.jsonl";
  std::map<std::string, MatchOutcome> done;
  if (std::filesystem::exists(journal_path)) {
    for (MatchOutcome& o : read_journal(journal_path))
      done.emplace(o.song_id, std::move(o));
  }

  std::vector<const ManifestEntry*> todo;
  for (const ManifestEntry& e : manifest)
    if (!done.contains(e.song_id)) todo.push_back(&e);

  if (!todo.empty()) {
    std::ofstream journal(journal_path, std::ios::app);
    std::ofstream report(opts.run_dir / "matches.tsv", std::ios::app);
    if (!journal || !report)
      throw IoError("cannot open journal or report under " +
                    opts.run_dir.string());

    const int jobs = std::max(1, opts.jobs);
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::condition_variable cv;
    std::map<std::size_t, SongResult> finished;
    std::exception_ptr worker_error;

    auto work = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) return;
        SongResult r;
        try {
          r = process_song(*todo[i], teacher, opts);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mutex);
          if (!worker_error) worker_error = std::current_exception();
          cv.notify_all();
          return;
        }
        std::lock_guard<std::mutex> lock(mutex);
        finished.emplace(i, std::move(r));
        cv.notify_all();
      }
    };

    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (int t = 0; t < jobs; ++t) threads.emplace_back(work);

    // Single writer, committing strictly in manifest order so journals are
    // reproducible whatever the worker count.
    for (std::size_t i = 0; i < todo.size(); ++i) {
      std::unique_lock<std::mutex> lock(mutex);
      cv.wait(lock, [&] { return finished.contains(i) || worker_error; });
      if (worker_error) break;
      SongResult r = std::move(finished.at(i));
      finished.erase(i);
      lock.unlock();
      journal << journal_line(r.outcome) << "\n";
      journal.flush();
      report << r.report_rows;
      report.flush();
      done.emplace(r.outcome.song_id, std::move(r.outcome));
    }
    for (std::thread& t : threads) t.join();
    if (worker_error) std::rethrow_exception(worker_error);
  }

  std::vector<MatchOutcome> outcomes;
  outcomes.reserve(manifest.size());
  for (const ManifestEntry& e : manifest) {
    auto it = done.find(e.song_id);
    if (it != done.end()) outcomes.push_back(it->second);
  }
  return outcomes;
}

TargetPolicyKind parse_policy_kind(const std::string& name) {
  if (name == "teacher") return TargetPolicyKind::kTeacherPredictions;
  if (name == "aligned") return TargetPolicyKind::kAlignedAnnotations;
  if (name == "agreement") return TargetPolicyKind::kAgreement;
  throw ConfigError("unknown target policy \"" + name +
                    "\" (want teacher, aligned or agreement)");
}

std::string policy_kind_name(TargetPolicyKind kind) {
  switch (kind) {
    case TargetPolicyKind::kTeacherPredictions: return "teacher";
    case TargetPolicyKind::kAlignedAnnotations: return "aligned";
    case TargetPolicyKind::kAgreement: return "agreement";
  }
  return "aligned";
}

std::unique_ptr<FrameTrainingSource> FrameTrainingSource::from_matches(
    const std::vector<MatchOutcome>& outcomes, const TargetPolicy& policy,
    const PipelineOptions& opts, std::size_t frame_stride) {
  if (!(policy.agreement_tolerance >= 0.0 && policy.agreement_tolerance < 1.0))
    throw ConfigError("agreement tolerance must lie in [0, 1)");
  if (frame_stride < 1) throw ConfigError("frame stride must be positive");

  auto source = std::make_unique<FrameTrainingSource>();
  source->stride_ = frame_stride;
  for (const MatchOutcome& o : outcomes) {
    if (o.status != MatchStatus::kMatched) continue;
    Track track;
    track.spec = load_spectrogram(o.candidate_id, opts);
    const AnnotationFile aligned = parse_annotation_file(
        detail::read_file(opts.run_dir / o.aligned_path));
    const VoiceSequence avs = rasterize_voice_sequence(
        aligned, aligned.timing.frame_rate, 0.0, track.spec.hop_seconds,
        track.spec.n_frames);

    std::vector<double> teacher_probs;
    if (policy.kind != TargetPolicyKind::kAlignedAnnotations) {
      const std::filesystem::path curve = opts.run_dir / o.predictions_path;
      if (o.predictions_path.empty() || !std::filesystem::exists(curve))
        throw DataError("cached predictions missing for " + o.song_id);
      teacher_probs = read_curve_cache(curve, nullptr);
      if (teacher_probs.size() != track.spec.n_frames)
        throw DataError("cached predictions for " + o.song_id +
                        " do not match the spectrogram");
    }

    track.targets.resize(track.spec.n_frames);
    track.weights.assign(track.spec.n_frames, 1.0);
    for (std::size_t t = 0; t < track.spec.n_frames; ++t) {
      const double a = static_cast<double>(avs.frames[t]);
      switch (policy.kind) {
        case TargetPolicyKind::kTeacherPredictions:
          track.targets[t] = teacher_probs[t];
          break;
        case TargetPolicyKind::kAlignedAnnotations:
          track.targets[t] = a;
          break;
        case TargetPolicyKind::kAgreement:
          track.targets[t] = a;
          if (std::abs(teacher_probs[t] - a) > policy.agreement_tolerance)
            track.weights[t] = 0.0;
          break;
      }
    }
    source->infos_.push_back({o.song_id, track.spec.n_frames, 0, 0.0});
    source->tracks_.push_back(std::move(track));
  }
  if (source->tracks_.empty())
    throw DataError("no matched songs to build a training set from");
  source->index_tracks();
  return source;
}

std::unique_ptr<FrameTrainingSource> FrameTrainingSource::from_labeled(
    const std::vector<LabeledEntry>& entries, const MelConfig& mel,
    std::size_t frame_stride) {
  if (frame_stride < 1) throw ConfigError("frame stride must be positive");
  if (entries.empty()) throw DataError("no labeled entries");

  auto source = std::make_unique<FrameTrainingSource>();
  source->stride_ = frame_stride;
  for (const LabeledEntry& e : entries) {
    Track track;
    const AudioBuffer audio = decode_audio(e.audio_path, mel.sample_rate);
    track.spec = compute_mel_spectrogram(audio, mel);
    const AnnotationFile file =
        parse_annotation_file(detail::read_file(e.annotation_path));
    const VoiceSequence avs = rasterize_voice_sequence(
        file, file.timing.frame_rate, 0.0, track.spec.hop_seconds,
        track.spec.n_frames);
    track.targets.resize(track.spec.n_frames);
    track.weights.assign(track.spec.n_frames, 1.0);
    for (std::size_t t = 0; t < track.spec.n_frames; ++t)
      track.targets[t] = static_cast<double>(avs.frames[t]);
    source->infos_.push_back({e.song_id, track.spec.n_frames, 0, 0.0});
    source->tracks_.push_back(std::move(track));
  }
  source->index_tracks();
  return source;
}

void FrameTrainingSource::index_tracks() {
  total_examples_ = 0;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    Track& t = tracks_[i];
    t.first_example = total_examples_;
    t.examples = (t.spec.n_frames + stride_ - 1) / stride_;
    total_examples_ += t.examples;

    double positive = 0.0;
    for (double w : t.weights) positive += w > 0.0 ? 1.0 : 0.0;
    infos_[i].examples = t.examples;
    infos_[i].positive_weight_fraction =
        t.weights.empty() ? 0.0 : positive / static_cast<double>(t.weights.size());
  }
}

TrainingExample FrameTrainingSource::example(std::size_t index) const {
  // Tracks are few; linear scan keeps this trivially correct.
  for (const Track& t : tracks_) {
    if (index < t.first_example || index >= t.first_example + t.examples)
      continue;
    const std::size_t frame = (index - t.first_example) * stride_;
    TrainingExample ex;
    ex.patch = extract_patch(t.spec, frame);
    ex.target = t.targets[frame];
    ex.weight = t.weights[frame];
    return ex;
  }
  throw ShapeError("training example index out of range");
}

std::unique_ptr<FrameTrainingSource> build_training_set(
    const std::vector<MatchOutcome>& outcomes, const TargetPolicy& policy,
    const PipelineOptions& opts, std::size_t frame_stride) {
  return FrameTrainingSource::from_matches(outcomes, policy, opts,
                                           frame_stride);
}

std::pair<std::vector<std::string>, std::vector<std::string>>
artist_filter_split(const std::vector<SplitItem>& items, double test_fraction,
                    std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  if (items.empty()) throw SplitError("nothing to split");

  // Group by artist in first-appearance order.
  std::vector<std::string> artists;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(items[i].artist_name);
    if (inserted) artists.push_back(items[i].artist_name);
    it->second.push_back(i);
  }
  if (artists.size() < 2)
    throw SplitError("artist filter needs at least two artists");

  std::mt19937_64 gen(seed);
  rng::shuffle(artists, gen);

  const double target = test_fraction * static_cast<double>(items.size());
  std::vector<bool> in_test(items.size(), false);
  double test_count = 0.0;
  for (const std::string& artist : artists) {
    if (test_count < target) {
      for (std::size_t i : groups[artist]) in_test[i] = true;
      test_count += static_cast<double>(groups[artist].size());
    }
  }

  std::vector<std::string> train_ids, test_ids;
  for (std::size_t i = 0; i < items.size(); ++i)
    (in_test[i] ? test_ids : train_ids).push_back(items[i].id);
  if (train_ids.empty() || test_ids.empty())
    throw SplitError("split left one side empty; adjust test_fraction");
  return {std::move(train_ids), std::move(test_ids)};
}

double frame_accuracy(const PredictionSequence& pred,
                      const VoiceSequence& truth, double threshold) {
  if (pred.size() == 0 || truth.size() == 0)
    throw LengthError("empty sequence in frame accuracy");

  std::int64_t expected_truth_len;
  if (pred.hop_seconds == truth.hop_seconds) {
    expected_truth_len = static_cast<std::int64_t>(pred.size());
  } else {
    expected_truth_len = static_cast<std::int64_t>(std::llround(
        static_cast<double>(pred.size()) * pred.hop_seconds /
        truth.hop_seconds));
  }
  if (std::llabs(expected_truth_len -
                 static_cast<std::int64_t>(truth.size())) > 2)
    throw LengthError("label length " + std::to_string(truth.size()) +
                      " does not cover the prediction span (expected about " +
                      std::to_string(expected_truth_len) + " frames)");

  std::size_t correct = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    std::size_t src = k;
    if (pred.hop_seconds != truth.hop_seconds) {
      src = static_cast<std::size_t>(std::llround(
          static_cast<double>(k) * pred.hop_seconds / truth.hop_seconds));
    }
    if (src >= truth.size()) src = truth.size() - 1;
    const bool voiced = pred.probs[k] >= threshold;
    if (voiced == (truth.frames[src] != 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

EvalReport evaluate_frame_accuracy(const SvdModel& model,
                                   const std::vector<LabeledEntry>& entries,
                                   double threshold, const MelConfig& mel,
                                   int median_width) {
  if (entries.empty()) throw DataError("no evaluation tracks");
  EvalReport report;
  report.threshold = threshold;
  double sum = 0.0;
  for (const LabeledEntry& e : entries) {
    const AudioBuffer audio = decode_audio(e.audio_path, mel.sample_rate);
    const MelSpectrogram spec = compute_mel_spectrogram(audio, mel);
    const PredictionSequence pred =
        predict_sequence(model, spec, median_width);
    const AnnotationFile file =
        parse_annotation_file(detail::read_file(e.annotation_path));
    const VoiceSequence truth = rasterize_voice_sequence(
        file, file.timing.frame_rate, 0.0, spec.hop_seconds, spec.n_frames);
    const double acc = frame_accuracy(pred, truth, threshold);
    report.tracks.push_back({e.song_id, spec.n_frames, acc});
    sum += acc;
  }
  report.mean = sum / static_cast<double>(report.tracks.size());
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::string out;
  std::size_t total_frames = 0;
  for (const EvalReport::Track& t : report.tracks) {
    out += "track\t" + t.id + "\t" + std::to_string(t.frames) + "\t" +
           detail::format_fixed(t.accuracy, 6) + "\n";
    total_frames += t.frames;
  }
  out += "mean\t" + std::to_string(report.tracks.size()) + "\t" +
         std::to_string(total_frames) + "\t" +
         detail::format_fixed(report.mean, 6) + "\n";
  return out;
}

std::filesystem::path round_directory(const std::filesystem::path& run_dir,
                                      int round) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "round_%03d", round);
  return run_dir / buf;
}

std::vector<RoundResult> iterate(const std::vector<ManifestEntry>& manifest,
                                 const SvdModel& teacher,
                                 const IterateOptions& opts, int rounds) {
  if (rounds < 1) throw ConfigError("rounds must be at least 1");

  std::vector<RoundResult> results;
  SvdModel current = teacher;
  for (int round = 1; round <= rounds; ++round) {
    PipelineOptions round_opts = opts.pipeline;
    round_opts.run_dir = round_directory(opts.pipeline.run_dir, round);
    std::filesystem::create_directories(round_opts.run_dir);

    const std::vector<MatchOutcome> outcomes =
        run_matching(manifest, current, round_opts);
    std::size_t match_count = 0;
    for (const MatchOutcome& o : outcomes)
      if (o.status == MatchStatus::kMatched) ++match_count;
    if (match_count == 0)
      throw EmptyRoundError("round " + std::to_string(round) +
                            " matched no songs");

    const auto source = build_training_set(outcomes, opts.policy, round_opts,
                                           opts.frame_stride);

    TrainHyper hyper = opts.trainer;
    hyper.seed = opts.trainer.seed + static_cast<std::uint64_t>(round - 1);
    SvdModel student = init_model(opts.student_arch, hyper.seed);
    {
      std::ofstream log(round_opts.run_dir / "train.log");
      student = train(std::move(student), *source, hyper, &log);
    }
    save_model(student, round_opts.run_dir / "model.svdm");

    RoundResult result;
    result.round = round;
    result.match_count = match_count;
    if (!opts.eval_entries.empty()) {
      result.eval = evaluate_frame_accuracy(student, opts.eval_entries,
                                            opts.eval_threshold, opts.pipeline.mel,
                                            opts.pipeline.median_width);
      detail::write_file(round_opts.run_dir / "eval.tsv",
                         format_eval_report(result.eval));
    }
    result.model = student;
    current = std::move(student);
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace voxalign
