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

#ifndef VOXALIGN_ALIGNMENT_HPP
#define VOXALIGN_ALIGNMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxalign/annotation.hpp"
#include "voxalign/prediction.hpp"

namespace voxalign {

struct SearchConfig {
  double alpha_ratio = 0.05;   // fr search half-range, relative to Fr
  int fr_steps = 101;          // odd, so the original Fr is always tested
  std::optional<double> max_abs_offset_seconds;  // unset = full overlap range
  double t_corr = 0.8;         // candidate acceptance threshold
  double hop_seconds = 315.0 / 22050.0;
};

void validate(const SearchConfig& cfg);  // throws ConfigError

struct NccResult {
  double value = 0.0;
  bool degenerate = false;  // an all-zero side; value forced to 0
};

struct AlignmentResult {
  double o_hat = 0.0;   // correction to the file offset, seconds
  double fr_hat = 0.0;  // corrected grid rate, units/second
  double score = 0.0;   // NCC at (o_hat, fr_hat)
  std::int64_t n_overlap_frames = 0;
};

// NCC(o, fr) for one shift: sum_t avs(t - shift) * p(t) over the overlap,
// divided by the full-sequence energies sqrt(sum avs^2 * sum p^2).
// Out-of-range indices read as zero. Never NaN: an all-zero side yields
// value 0 with the degenerate flag set.
NccResult ncc(const VoiceSequence& avs, const PredictionSequence& pred,
              std::int64_t shift_frames);

struct ShiftScan {
  std::int64_t first_shift = 0;
  std::vector<double> scores;  // scores[i] = NCC at shift first_shift + i

  double at(std::int64_t shift) const {
    return scores[static_cast<std::size_t>(shift - first_shift)];
  }
};

// NCC for every integer shift in [-(len(avs)-1), len(pred)-1], optionally
// clamped to |shift| <= max_abs_shift. FFT-accelerated; matches the direct
// sum to ~1e-12. Throws DegenerateError when either side is all zero.
ShiftScan cross_correlate_all_shifts(
    const VoiceSequence& avs, const PredictionSequence& pred,
    std::optional<std::int64_t> max_abs_shift = std::nullopt);

// Brute-force argmax over the (offset, rate) grid: fr takes fr_steps evenly
// spaced values in [Fr(1-alpha), Fr(1+alpha)] (a constant stretch of the
// grid, never a local warp); for each fr the best integer-frame shift is
// found by FFT correlation. Ties break toward smaller |o_hat|, then fr
// closer to Fr. The reported score is recomputed with the direct sum.
AlignmentResult search_alignment(const AnnotationFile& file,
                                 const PredictionSequence& pred,
                                 const SearchConfig& cfg);

// Largest score among candidates at or above t_corr; nullopt when none
// qualifies. Equal scores break toward the lexicographically smaller id.
std::optional<std::pair<std::string, AlignmentResult>> select_best_candidate(
    const std::vector<std::pair<std::string, AlignmentResult>>& results,
    const SearchConfig& cfg);

// Report row: song, candidate, score, o_hat, fr_hat, overlap (6-decimal).
std::string format_alignment_record(const std::string& song_id,
                                    const std::string& candidate_id,
                                    const AlignmentResult& result);

}  // namespace voxalign

#endif  // VOXALIGN_ALIGNMENT_HPP
