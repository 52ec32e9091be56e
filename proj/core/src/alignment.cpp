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

#include "voxalign/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "internal_util.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/fft.hpp"

namespace voxalign {

namespace {

// Two FFT results within this band are treated as tied and re-ranked with
// the exact direct sum.
constexpr double kFftTieBand = 1e-9;
constexpr std::size_t kMaxTieCandidates = 32;

double energy(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

std::vector<double> to_doubles(const VoiceSequence& avs) {
  return std::vector<double>(avs.frames.begin(), avs.frames.end());
}

void check_hops(double a, double b) {
  if (a != b)
    throw InvariantError("sequence hop mismatch: " +
                         detail::format_double_shortest(a) + " vs " +
                         detail::format_double_shortest(b));
}

double direct_numerator(const std::vector<double>& a,
                        const std::vector<double>& p, std::int64_t s) {
  const std::int64_t la = static_cast<std::int64_t>(a.size());
  const std::int64_t lp = static_cast<std::int64_t>(p.size());
  const std::int64_t t0 = std::max<std::int64_t>(0, s);
  const std::int64_t t1 = std::min(lp, la + s);
  double num = 0.0;
  for (std::int64_t t = t0; t < t1; ++t)
    num += a[static_cast<std::size_t>(t - s)] * p[static_cast<std::size_t>(t)];
  return num;
}

std::int64_t overlap_frames(std::size_t la, std::size_t lp, std::int64_t s) {
  const std::int64_t t1 =
      std::min<std::int64_t>(static_cast<std::int64_t>(lp),
                             static_cast<std::int64_t>(la) + s);
  const std::int64_t t0 = std::max<std::int64_t>(0, s);
  return std::max<std::int64_t>(0, t1 - t0);
}

}  // namespace

void validate(const SearchConfig& cfg) {
  if (!(cfg.alpha_ratio > 0.0 && cfg.alpha_ratio < 1.0))
    throw ConfigError("alpha_ratio must lie in (0, 1)");
  if (cfg.fr_steps < 1 || cfg.fr_steps % 2 == 0)
    throw ConfigError("fr_steps must be odd and positive");
  if (!(cfg.t_corr > 0.0 && cfg.t_corr <= 1.0))
    throw ConfigError("t_corr must lie in (0, 1]");
  if (!(cfg.hop_seconds > 0.0))
    throw ConfigError("hop_seconds must be positive");
  if (cfg.max_abs_offset_seconds && !(*cfg.max_abs_offset_seconds > 0.0))
    throw ConfigError("max_abs_offset_seconds must be positive when set");
}

NccResult ncc(const VoiceSequence& avs, const PredictionSequence& pred,
              std::int64_t shift_frames) {
  check_hops(avs.hop_seconds, pred.hop_seconds);
  const std::vector<double> a = to_doubles(avs);
  const double ea = energy(a);
  const double ep = energy(pred.probs);
  if (ea == 0.0 || ep == 0.0) return {0.0, true};
  const double num = direct_numerator(a, pred.probs, shift_frames);
  return {num / std::sqrt(ea * ep), false};
}

ShiftScan cross_correlate_all_shifts(const VoiceSequence& avs,
                                     const PredictionSequence& pred,
                                     std::optional<std::int64_t> max_abs_shift) {
  check_hops(avs.hop_seconds, pred.hop_seconds);
  if (avs.size() == 0 || pred.size() == 0)
    throw DegenerateError("empty sequence");
  const std::vector<double> a = to_doubles(avs);
  const double ea = energy(a);
  const double ep = energy(pred.probs);
  if (ea == 0.0) throw DegenerateError("annotation voice sequence is all zero");
  if (ep == 0.0) throw DegenerateError("prediction sequence is all zero");

  const std::vector<double> corr = fft::cross_correlate(a, pred.probs);
  const double inv_norm = 1.0 / std::sqrt(ea * ep);

  std::int64_t lo = -(static_cast<std::int64_t>(a.size()) - 1);
  std::int64_t hi = static_cast<std::int64_t>(pred.size()) - 1;
  if (max_abs_shift) {
    lo = std::max(lo, -*max_abs_shift);
    hi = std::min(hi, *max_abs_shift);
  }
  if (lo > hi) throw DegenerateError("empty shift range");

  ShiftScan scan;
  scan.first_shift = lo;
  scan.scores.resize(static_cast<std::size_t>(hi - lo + 1));
  const std::int64_t base = static_cast<std::int64_t>(a.size()) - 1;
  for (std::int64_t s = lo; s <= hi; ++s)
    scan.scores[static_cast<std::size_t>(s - lo)] =
        corr[static_cast<std::size_t>(base + s)] * inv_norm;
  return scan;
}

AlignmentResult search_alignment(const AnnotationFile& file,
                                 const PredictionSequence& pred,
                                 const SearchConfig& cfg) {
  validate(cfg);
  if (file.notes.empty())
    throw InvariantError("cannot align a file without notes");
  check_hops(cfg.hop_seconds, pred.hop_seconds);
  if (energy(pred.probs) == 0.0)
    throw DegenerateError("prediction sequence is all zero");

  const double hop = cfg.hop_seconds;
  const double fr0 = file.timing.frame_rate;
  const int half = cfg.fr_steps / 2;
  const double fr_step =
      cfg.fr_steps > 1 ? 2.0 * cfg.alpha_ratio * fr0 / (cfg.fr_steps - 1) : 0.0;

  std::optional<std::int64_t> max_shift;
  if (cfg.max_abs_offset_seconds)
    max_shift = static_cast<std::int64_t>(
        std::floor(*cfg.max_abs_offset_seconds / hop + 1e-9));

  // The prediction spectrum is shared across the whole fr grid; size it for
  // the longest rasterization (the slowest rate).
  const double fr_min = fr0 - half * fr_step;
  const std::size_t la_max =
      annotation_span_frames(file, fr_min > 0.0 ? fr_min : fr0, 0.0, hop);
  if (la_max == 0) throw DegenerateError("annotation span has no frames");
  const std::size_t fft_n = fft::next_pow2(la_max + pred.size() - 1);
  const fft::PaddedSpectrum pred_spectrum =
      fft::prepare_padded(pred.probs, fft_n);
  const double ep = energy(pred.probs);

  bool found = false;
  double best_score = -1.0;
  std::int64_t best_shift = 0;
  double best_fr = fr0;
  double best_dfr = 0.0;
  std::size_t best_la = 0;

  for (int i = 0; i < cfg.fr_steps; ++i) {
    // Centered grid so the middle step tests exactly Fr.
    const double fr = fr0 + (i - half) * fr_step;
    if (!(fr > 0.0)) continue;
    const std::size_t la = annotation_span_frames(file, fr, 0.0, hop);
    if (la == 0) continue;
    const VoiceSequence avs = rasterize_voice_sequence(file, fr, 0.0, hop, la);
    std::vector<double> a = to_doubles(avs);
    const double ea = energy(a);
    if (ea == 0.0) continue;

    const std::vector<double> corr =
        fft::cross_correlate_prepared(a, pred_spectrum);
    const double inv_norm = 1.0 / std::sqrt(ea * ep);

    std::int64_t lo = -(static_cast<std::int64_t>(la) - 1);
    std::int64_t hi = static_cast<std::int64_t>(pred.size()) - 1;
    if (max_shift) {
      lo = std::max(lo, -*max_shift);
      hi = std::min(hi, *max_shift);
    }
    if (lo > hi) continue;

    const std::int64_t base = static_cast<std::int64_t>(la) - 1;
    double fft_max = -std::numeric_limits<double>::infinity();
    for (std::int64_t s = lo; s <= hi; ++s)
      fft_max = std::max(fft_max,
                         corr[static_cast<std::size_t>(base + s)] * inv_norm);

    // Shifts within the FFT noise band get re-ranked with the exact sum;
    // ties prefer the smaller |shift|.
    std::vector<std::int64_t> candidates;
    for (std::int64_t s = lo; s <= hi; ++s) {
      const double v = corr[static_cast<std::size_t>(base + s)] * inv_norm;
      if (v >= fft_max - kFftTieBand) candidates.push_back(s);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](std::int64_t x, std::int64_t y) {
                return std::llabs(x) != std::llabs(y)
                           ? std::llabs(x) < std::llabs(y)
                           : x < y;
              });
    if (candidates.size() > kMaxTieCandidates)
      candidates.resize(kMaxTieCandidates);

    double fr_best_score = -std::numeric_limits<double>::infinity();
    std::int64_t fr_best_shift = 0;
    for (std::int64_t s : candidates) {
      const double v = direct_numerator(a, pred.probs, s) / std::sqrt(ea * ep);
      if (v > fr_best_score) {
        fr_best_score = v;
        fr_best_shift = s;
      }
    }

    const double dfr = std::abs(fr - fr0);
    const bool better =
        !found || fr_best_score > best_score ||
        (fr_best_score == best_score &&
         (std::llabs(fr_best_shift) < std::llabs(best_shift) ||
          (std::llabs(fr_best_shift) == std::llabs(best_shift) &&
           dfr < best_dfr)));
    if (better) {
      found = true;
      best_score = fr_best_score;
      best_shift = fr_best_shift;
      best_fr = fr;
      best_dfr = dfr;
      best_la = la;
    }
  }

  if (!found)
    throw DegenerateError("no rate step produced a non-zero voice sequence");

  AlignmentResult result;
  result.o_hat = static_cast<double>(best_shift) * hop;
  result.fr_hat = best_fr;
  result.score = best_score;
  result.n_overlap_frames = overlap_frames(best_la, pred.size(), best_shift);
  return result;
}

std::optional<std::pair<std::string, AlignmentResult>> select_best_candidate(
    const std::vector<std::pair<std::string, AlignmentResult>>& results,
    const SearchConfig& cfg) {
  const std::pair<std::string, AlignmentResult>* best = nullptr;
  for (const auto& entry : results) {
    if (entry.second.score < cfg.t_corr) continue;
    if (best == nullptr || entry.second.score > best->second.score ||
        (entry.second.score == best->second.score &&
         entry.first < best->first))
      best = &entry;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

std::string format_alignment_record(const std::string& song_id,
                                    const std::string& candidate_id,
                                    const AlignmentResult& r) {
  return song_id + "\t" + candidate_id + "\t" +
         detail::format_fixed(r.score, 6) + "\t" +
         detail::format_fixed(r.o_hat, 6) + "\t" +
         detail::format_fixed(r.fr_hat, 6) + "\t" +
         std::to_string(r.n_overlap_frames);
}

}  // namespace voxalign
