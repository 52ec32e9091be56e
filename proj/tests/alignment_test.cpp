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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "synthetic.hpp"
#include "voxalign/alignment.hpp"
#include "voxalign/annotation.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/rng.hpp"

using namespace voxalign;

namespace {

constexpr double kHop = 315.0 / 22050.0;

VoiceSequence seq_of(std::vector<std::uint8_t> frames, double hop = kHop) {
  VoiceSequence s;
  s.frames = std::move(frames);
  s.hop_seconds = hop;
  return s;
}

PredictionSequence pred_of(std::vector<double> probs, double hop = kHop) {
  PredictionSequence p;
  p.probs = std::move(probs);
  p.hop_seconds = hop;
  return p;
}

// O(N^2) restatement of the score used to cross-check the FFT path.
double ncc_oracle(const VoiceSequence& avs, const PredictionSequence& pred,
                  std::int64_t shift) {
  double ea = 0.0, ep = 0.0, num = 0.0;
  for (std::uint8_t v : avs.frames) ea += static_cast<double>(v) * v;
  for (double v : pred.probs) ep += v * v;
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(pred.size()); ++t) {
    const std::int64_t u = t - shift;
    if (u < 0 || u >= static_cast<std::int64_t>(avs.size())) continue;
    num += static_cast<double>(avs.frames[static_cast<std::size_t>(u)]) *
           pred.probs[static_cast<std::size_t>(t)];
  }
  return num / std::sqrt(ea * ep);
}

VoiceSequence random_avs(std::size_t n, std::mt19937_64& gen) {
  VoiceSequence s;
  s.hop_seconds = kHop;
  s.frames.resize(n);
  bool voiced = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng::unit(gen) < 0.05) voiced = !voiced;
    s.frames[i] = voiced ? 1 : 0;
  }
  if (!s.any()) s.frames[n / 2] = 1;
  return s;
}

PredictionSequence random_pred(std::size_t n, std::mt19937_64& gen) {
  PredictionSequence p;
  p.hop_seconds = kHop;
  p.probs.resize(n);
  for (double& v : p.probs) v = rng::unit(gen);
  return p;
}

AnnotationFile fixture_file(std::mt19937_64& gen, int notes = 20) {
  return voxtest::random_annotation(gen, notes, 4.0, 1.0);
}

}  // namespace

TEST_CASE("ncc basics") {
  SUBCASE("self correlation is exactly one") {
    const VoiceSequence avs = seq_of({0, 1, 1, 0, 1, 0, 0, 1});
    PredictionSequence pred;
    pred.hop_seconds = kHop;
    pred.probs.assign(avs.frames.begin(), avs.frames.end());
    CHECK(ncc(avs, pred, 0).value == 1.0);
  }
  SUBCASE("disjoint supports score zero") {
    CHECK(ncc(seq_of({1, 1, 0, 0}), pred_of({0.0, 0.0, 0.7, 0.7}), 0).value ==
          0.0);
  }
  SUBCASE("hand-evaluated example") {
    // (0.5 + 0.5) / (sqrt(2) * sqrt(0.5)) = 1
    CHECK(ncc(seq_of({1, 1, 0, 0}), pred_of({0.5, 0.5, 0.0, 0.0}), 0).value ==
          1.0);
  }
  SUBCASE("degenerate sides score zero with the flag set") {
    const NccResult r = ncc(seq_of({0, 0, 0}), pred_of({0.5, 0.5, 0.5}), 0);
    CHECK(r.value == 0.0);
    CHECK(r.degenerate);
    const NccResult r2 = ncc(seq_of({1, 0, 1}), pred_of({0.0, 0.0, 0.0}), 0);
    CHECK(r2.value == 0.0);
    CHECK(r2.degenerate);
  }
  SUBCASE("out-of-range shifts read zeros") {
    const VoiceSequence avs = seq_of({1, 1});
    const PredictionSequence pred = pred_of({1.0, 1.0});
    CHECK(ncc(avs, pred, 5).value == 0.0);
    CHECK(ncc(avs, pred, -5).value == 0.0);
  }
  SUBCASE("hop mismatch is rejected") {
    CHECK_THROWS_AS(ncc(seq_of({1}, 0.1), pred_of({1.0}, 0.2), 0),
                    InvariantError);
  }
}

TEST_CASE("fft scan matches the direct sum at every shift") {
  std::mt19937_64 gen(5);
  const VoiceSequence avs = random_avs(1000, gen);
  const PredictionSequence pred = random_pred(1000, gen);
  const ShiftScan scan = cross_correlate_all_shifts(avs, pred);
  REQUIRE(scan.first_shift == -999);
  REQUIRE(scan.scores.size() == 1999);
  for (std::int64_t s = -999; s <= 999; ++s) {
    CHECK(std::abs(scan.at(s) - ncc_oracle(avs, pred, s)) < 1e-9);
  }
}

TEST_CASE("constructed shift is recovered exactly") {
  std::mt19937_64 gen(8);
  const VoiceSequence avs = random_avs(400, gen);
  PredictionSequence pred;
  pred.hop_seconds = kHop;
  pred.probs.assign(avs.size() + 50, 0.0);
  for (std::size_t i = 0; i < avs.size(); ++i)
    pred.probs[i + 7] = static_cast<double>(avs.frames[i]);

  const ShiftScan scan = cross_correlate_all_shifts(avs, pred);
  std::int64_t argmax = scan.first_shift;
  for (std::size_t i = 0; i < scan.scores.size(); ++i)
    if (scan.scores[i] > scan.at(argmax))
      argmax = scan.first_shift + static_cast<std::int64_t>(i);
  CHECK(argmax == 7);
  CHECK(ncc(avs, pred, 7).value == 1.0);
}

TEST_CASE("degenerate scans throw") {
  CHECK_THROWS_AS(
      cross_correlate_all_shifts(seq_of({1, 1}), pred_of({0.0, 0.0})),
      DegenerateError);
  CHECK_THROWS_AS(
      cross_correlate_all_shifts(seq_of({0, 0}), pred_of({0.5, 0.5})),
      DegenerateError);
}

TEST_CASE("scan respects the max shift clamp") {
  std::mt19937_64 gen(4);
  const VoiceSequence avs = random_avs(100, gen);
  const PredictionSequence pred = random_pred(100, gen);
  const ShiftScan scan = cross_correlate_all_shifts(avs, pred, 10);
  CHECK(scan.first_shift == -10);
  CHECK(scan.scores.size() == 21);
}

TEST_CASE("scaling predictions changes no score") {
  std::mt19937_64 gen(12);
  const VoiceSequence avs = random_avs(300, gen);
  PredictionSequence pred = random_pred(300, gen);
  const ShiftScan base = cross_correlate_all_shifts(avs, pred);
  for (double& v : pred.probs) v *= 37.5;
  const ShiftScan scaled = cross_correlate_all_shifts(avs, pred);
  for (std::size_t i = 0; i < base.scores.size(); ++i)
    CHECK(scaled.scores[i] == doctest::Approx(base.scores[i]).epsilon(1e-12));
}

TEST_CASE("scores stay within [0, 1] for non-negative input") {
  std::mt19937_64 gen(19);
  for (int trial = 0; trial < 5; ++trial) {
    const VoiceSequence avs = random_avs(257, gen);
    const PredictionSequence pred = random_pred(311, gen);
    const ShiftScan scan = cross_correlate_all_shifts(avs, pred);
    for (double v : scan.scores) {
      CHECK(v >= -1e-12);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("search recovers identity timing exactly") {
  std::mt19937_64 gen(21);
  const AnnotationFile file = fixture_file(gen);
  SearchConfig cfg;
  cfg.hop_seconds = kHop;

  const std::size_t n = annotation_span_frames(file, 4.0, 0.0, kHop) + 100;
  const VoiceSequence truth = rasterize_voice_sequence(file, 4.0, 0.0, kHop, n);
  PredictionSequence pred;
  pred.hop_seconds = kHop;
  pred.probs.assign(truth.frames.begin(), truth.frames.end());

  const AlignmentResult r = search_alignment(file, pred, cfg);
  CHECK(r.o_hat == 0.0);
  CHECK(r.fr_hat == 4.0);
  CHECK(r.score == 1.0);
  CHECK(r.n_overlap_frames > 0);
}

TEST_CASE("search recovers a synthetic stretch and shift") {
  std::mt19937_64 gen(23);
  const AnnotationFile file = fixture_file(gen, 30);
  SearchConfig cfg;
  cfg.hop_seconds = kHop;

  const double fr_true = 4.0 * 1.03;
  const double o_true = 2.3;
  const std::size_t n =
      annotation_span_frames(file, fr_true, o_true, kHop) + 200;
  const VoiceSequence truth =
      rasterize_voice_sequence(file, fr_true, o_true, kHop, n);
  PredictionSequence pred;
  pred.hop_seconds = kHop;
  pred.probs.assign(truth.frames.begin(), truth.frames.end());

  const AlignmentResult r = search_alignment(file, pred, cfg);
  const double fr_step = 2.0 * cfg.alpha_ratio * 4.0 / (cfg.fr_steps - 1);
  CHECK(std::abs(r.fr_hat - fr_true) <= fr_step + 1e-12);
  CHECK(std::abs(r.o_hat - o_true) <= kHop + 1e-12);
  CHECK(r.score >= 0.99);
  // the offset correction is an exact multiple of the hop
  const double ratio = r.o_hat / kHop;
  CHECK(std::abs(ratio - std::llround(ratio)) < 1e-9);
  // fr stays inside the configured interval
  CHECK(r.fr_hat >= 4.0 * (1.0 - cfg.alpha_ratio) - 1e-12);
  CHECK(r.fr_hat <= 4.0 * (1.0 + cfg.alpha_ratio) + 1e-12);
}

TEST_CASE("random predictions stay under the acceptance threshold") {
  std::mt19937_64 gen(29);
  const AnnotationFile file = fixture_file(gen);
  SearchConfig cfg;
  cfg.hop_seconds = kHop;
  int below = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const PredictionSequence noise = random_pred(3000, gen);
    const AlignmentResult r = search_alignment(file, noise, cfg);
    if (r.score < cfg.t_corr) ++below;
  }
  CHECK(below >= trials - 1);
}

TEST_CASE("search propagates degenerate and invariant errors") {
  std::mt19937_64 gen(31);
  const AnnotationFile file = fixture_file(gen);
  SearchConfig cfg;
  cfg.hop_seconds = kHop;

  PredictionSequence zeros;
  zeros.hop_seconds = kHop;
  zeros.probs.assign(500, 0.0);
  CHECK_THROWS_AS(search_alignment(file, zeros, cfg), DegenerateError);

  AnnotationFile empty = file;
  empty.notes.clear();
  empty.line_breaks.clear();
  CHECK_THROWS_AS(search_alignment(empty, random_pred(100, gen), cfg),
                  InvariantError);

  SearchConfig bad = cfg;
  bad.fr_steps = 100;  // even
  CHECK_THROWS_AS(search_alignment(file, random_pred(100, gen), bad),
                  ConfigError);
}

TEST_CASE("the unstretched rate is always evaluated") {
  // fr_steps = 1 degenerates the grid to exactly Fr.
  std::mt19937_64 gen(37);
  const AnnotationFile file = fixture_file(gen);
  SearchConfig cfg;
  cfg.hop_seconds = kHop;
  cfg.fr_steps = 1;

  const std::size_t n = annotation_span_frames(file, 4.0, 0.0, kHop) + 50;
  const VoiceSequence truth = rasterize_voice_sequence(file, 4.0, 0.0, kHop, n);
  PredictionSequence pred;
  pred.hop_seconds = kHop;
  pred.probs.assign(truth.frames.begin(), truth.frames.end());
  const AlignmentResult r = search_alignment(file, pred, cfg);
  CHECK(r.fr_hat == 4.0);
  CHECK(r.score == 1.0);
}

TEST_CASE("select_best_candidate") {
  SearchConfig cfg;
  AlignmentResult a{0.0, 4.0, 0.75, 100};
  AlignmentResult b{0.0, 4.0, 0.85, 100};
  AlignmentResult c{0.0, 4.0, 0.90, 100};

  SUBCASE("keeps the largest passing score") {
    const auto best = select_best_candidate({{"x", a}, {"y", b}, {"z", c}}, cfg);
    REQUIRE(best.has_value());
    CHECK(best->first == "z");
    CHECK(best->second.score == 0.90);
  }
  SUBCASE("none passes") {
    AlignmentResult lo{0.0, 4.0, 0.5, 10};
    AlignmentResult mid{0.0, 4.0, 0.7, 10};
    CHECK_FALSE(select_best_candidate({{"x", lo}, {"y", mid}}, cfg).has_value());
  }
  SUBCASE("empty input") {
    CHECK_FALSE(select_best_candidate({}, cfg).has_value());
  }
  SUBCASE("score ties break lexicographically") {
    const auto best = select_best_candidate({{"beta", c}, {"alpha", c}}, cfg);
    REQUIRE(best.has_value());
    CHECK(best->first == "alpha");
  }
}

TEST_CASE("alignment record formatting") {
  AlignmentResult r{0.5, 4.04, 0.876543219, 1234};
  CHECK(format_alignment_record("song", "cand.wav", r) ==
        "song\tcand.wav\t0.876543\t0.500000\t4.040000\t1234");
}
