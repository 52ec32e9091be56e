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

#include "synthetic.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/mel.hpp"

using namespace voxalign;
using voxtest::TempDir;

namespace {

AudioBuffer sine(double seconds, double hz, double amp) {
  AudioBuffer audio;
  audio.sample_rate = 22050;
  audio.samples.resize(static_cast<std::size_t>(seconds * audio.sample_rate));
  for (std::size_t i = 0; i < audio.samples.size(); ++i)
    audio.samples[i] = static_cast<float>(
        amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / 22050.0));
  return audio;
}

// Independent restatement of the mel scale for the band-center oracle.
double hz_to_mel_oracle(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
double mel_to_hz_oracle(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

int nearest_band_oracle(double hz, const MelConfig& cfg) {
  const double lo = hz_to_mel_oracle(cfg.mel_min_hz);
  const double hi = hz_to_mel_oracle(cfg.mel_max_hz);
  int best = 0;
  double best_d = 1e300;
  for (int b = 0; b < kMelBands; ++b) {
    const double center =
        mel_to_hz_oracle(lo + (hi - lo) * (b + 1) / (kMelBands + 1));
    const double d = std::abs(center - hz);
    if (d < best_d) {
      best_d = d;
      best = b;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("pure tone concentrates in the band nearest its frequency") {
  const MelConfig cfg;
  const MelSpectrogram spec = compute_mel_spectrogram(sine(2.0, 440.0, 0.5), cfg);
  const int expected = nearest_band_oracle(440.0, cfg);
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    int argmax = 0;
    for (int b = 1; b < kMelBands; ++b)
      if (spec.at(f, b) > spec.at(f, argmax)) argmax = b;
    CHECK(argmax == expected);
  }
}

TEST_CASE("silence maps to exactly zero") {
  AudioBuffer audio;
  audio.sample_rate = 22050;
  audio.samples.assign(22050, 0.0f);
  const MelSpectrogram spec = compute_mel_spectrogram(audio, MelConfig{});
  for (float v : spec.values) CHECK(v == 0.0f);
}

TEST_CASE("doubling the amplitude never decreases a cell") {
  const MelConfig cfg;
  const MelSpectrogram lo = compute_mel_spectrogram(sine(1.0, 523.0, 0.2), cfg);
  const MelSpectrogram hi = compute_mel_spectrogram(sine(1.0, 523.0, 0.4), cfg);
  REQUIRE(lo.values.size() == hi.values.size());
  for (std::size_t i = 0; i < lo.values.size(); ++i)
    CHECK(hi.values[i] >= lo.values[i] - 1e-6f);
}

TEST_CASE("frame count formula and the short-buffer error") {
  const MelConfig cfg;
  AudioBuffer audio;
  audio.sample_rate = 22050;

  audio.samples.assign(1024, 0.1f);
  CHECK(compute_mel_spectrogram(audio, cfg).n_frames == 1);

  audio.samples.assign(1024 + 315 * 7 + 3, 0.1f);
  CHECK(compute_mel_spectrogram(audio, cfg).n_frames == 8);

  audio.samples.assign(1023, 0.1f);
  CHECK_THROWS_AS(compute_mel_spectrogram(audio, cfg), FormatError);
  audio.samples.clear();
  CHECK_THROWS_AS(compute_mel_spectrogram(audio, cfg), FormatError);
}

TEST_CASE("deterministic output") {
  const AudioBuffer audio = sine(1.5, 330.0, 0.3);
  const MelSpectrogram a = compute_mel_spectrogram(audio, MelConfig{});
  const MelSpectrogram b = compute_mel_spectrogram(audio, MelConfig{});
  CHECK(a.values == b.values);
}

TEST_CASE("filterbank rows are triangular and only overlap neighbours") {
  const MelFilterbank fb = mel_filterbank(MelConfig{});
  REQUIRE(fb.rows.size() == kMelBands);
  const std::size_t n_bins = 1024 / 2 + 1;

  std::vector<std::vector<double>> dense(kMelBands,
                                         std::vector<double>(n_bins, 0.0));
  for (int b = 0; b < kMelBands; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < fb.rows[b].weights.size(); ++k) {
      const double w = fb.rows[b].weights[k];
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      dense[b][fb.rows[b].first_bin + k] = w;
      sum += w;
    }
    CHECK(sum > 0.0);
  }
  for (int i = 0; i < kMelBands; ++i) {
    for (int j = i + 2; j < kMelBands; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) dot += dense[i][k] * dense[j][k];
      CHECK(dot == 0.0);
    }
  }
  // centers are increasing and inside the configured range
  for (int b = 1; b < kMelBands; ++b)
    CHECK(fb.center_hz[b] > fb.center_hz[b - 1]);
  CHECK(fb.center_hz.front() > 27.5);
  CHECK(fb.center_hz.back() < 8000.0);
}

TEST_CASE("reflect_index") {
  CHECK(reflect_index(0, 1) == 0);
  CHECK(reflect_index(-5, 1) == 0);
  CHECK(reflect_index(-1, 10) == 1);
  CHECK(reflect_index(-2, 10) == 2);
  CHECK(reflect_index(10, 10) == 8);
  CHECK(reflect_index(9, 10) == 9);
  CHECK(reflect_index(-9, 10) == 9);
  CHECK(reflect_index(-10, 10) == 8);  // period 18: -10 -> 8
}

TEST_CASE("patch extraction") {
  const MelConfig cfg;
  const AudioBuffer audio = sine(3.0, 440.0, 0.4);
  MelSpectrogram spec = compute_mel_spectrogram(audio, cfg);
  REQUIRE(spec.n_frames >= 200);
  spec.n_frames = 200;
  spec.values.resize(200 * kMelBands);

  SUBCASE("one patch per frame with matching centers") {
    const std::vector<MelPatch> patches = extract_patches(spec);
    REQUIRE(patches.size() == 200);
    for (std::size_t k = 0; k < patches.size(); ++k)
      CHECK(patches[k].center_frame == k);
  }

  SUBCASE("reflection at the left edge") {
    const MelPatch patch = extract_patch(spec, 0);
    for (int j = 0; j < kPatchFrames; ++j) {
      const std::size_t src = j < kPatchCenter
                                  ? static_cast<std::size_t>(kPatchCenter - j)
                                  : static_cast<std::size_t>(j - kPatchCenter);
      for (int b = 0; b < kMelBands; ++b)
        CHECK(patch.values[static_cast<std::size_t>(b) * kPatchFrames + j] ==
              spec.at(src, b));
    }
  }

  SUBCASE("constant spectrogram gives identical patches") {
    MelSpectrogram flat;
    flat.n_frames = 150;
    flat.hop_seconds = spec.hop_seconds;
    flat.values.assign(150 * kMelBands, 0.75f);
    const std::vector<MelPatch> patches = extract_patches(flat);
    for (const MelPatch& p : patches) CHECK(p.values == patches[0].values);
  }

  SUBCASE("short spectrograms still produce full patches") {
    for (std::size_t n : {std::size_t{1}, std::size_t{114}, std::size_t{115},
                          std::size_t{500}}) {
      MelSpectrogram s;
      s.n_frames = n;
      s.hop_seconds = spec.hop_seconds;
      s.values.resize(n * kMelBands);
      for (std::size_t i = 0; i < s.values.size(); ++i)
        s.values[i] = static_cast<float>(i % 97) * 0.01f;
      const std::vector<MelPatch> patches = extract_patches(s);
      CHECK(patches.size() == n);
      for (const MelPatch& p : patches)
        CHECK(p.values.size() ==
              static_cast<std::size_t>(kMelBands) * kPatchFrames);
    }
  }
}

TEST_CASE("mel cache round trip") {
  TempDir dir("mel");
  const MelSpectrogram spec =
      compute_mel_spectrogram(sine(1.0, 440.0, 0.4), MelConfig{});
  write_mel_cache(dir / "a.mels", spec);
  const MelSpectrogram back = read_mel_cache(dir / "a.mels");
  CHECK(back.n_frames == spec.n_frames);
  CHECK(back.hop_seconds == spec.hop_seconds);
  CHECK(back.values == spec.values);
}

TEST_CASE("curve cache round trip and error handling") {
  TempDir dir("mel");
  const std::vector<double> curve = {0.0, 0.25, 0.5, 1.0};
  write_curve_cache(dir / "c.mels", curve, 0.01);
  double hop = 0.0;
  const std::vector<double> back = read_curve_cache(dir / "c.mels", &hop);
  CHECK(hop == 0.01);
  REQUIRE(back.size() == curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i)
    CHECK(back[i] == doctest::Approx(curve[i]).epsilon(1e-7));

  std::ofstream bad(dir / "bad.mels", std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_AS(read_mel_cache(dir / "bad.mels"), FormatError);
}
