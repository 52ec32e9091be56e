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

#ifndef VOXALIGN_MEL_HPP
#define VOXALIGN_MEL_HPP

#include <cstddef>
#include <filesystem>
#include <vector>

#include "voxalign/audio.hpp"

namespace voxalign {

inline constexpr int kMelBands = 80;
inline constexpr int kPatchFrames = 115;
inline constexpr int kPatchCenter = 57;  // zero-based center column

struct MelConfig {
  int sample_rate = 22050;
  int window = 1024;  // Hann
  int hop = 315;      // ~14.3 ms, ~70 fps
  double mel_min_hz = 27.5;
  double mel_max_hz = 8000.0;

  double hop_seconds() const {
    return static_cast<double>(hop) / sample_rate;
  }
};

// Log-compressed mel magnitudes, frame-major: values[frame * kMelBands + band].
struct MelSpectrogram {
  std::vector<float> values;
  std::size_t n_frames = 0;
  double hop_seconds = 0.0;

  float at(std::size_t frame, std::size_t band) const {
    return values[frame * kMelBands + band];
  }
};

// One model input window, band-major: values[band * kPatchFrames + column].
struct MelPatch {
  std::vector<float> values;
  std::size_t center_frame = 0;
};

// Triangular filters on the mel scale; row b spans fft bins
// [first_bin, first_bin + weights.size()).
struct MelFilterbank {
  struct Row {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };
  std::vector<Row> rows;
  std::vector<double> center_hz;
};

MelFilterbank mel_filterbank(const MelConfig& cfg);

// Magnitude STFT -> mel filterbank -> log(1 + x).
// n_frames = (samples - window) / hop + 1; shorter input is a FormatError.
MelSpectrogram compute_mel_spectrogram(const AudioBuffer& audio,
                                       const MelConfig& cfg);

// Mirror index for reflection padding: ..., 2, 1, 0, 1, 2, ... capped so
// that a length-1 source maps everything to 0.
std::size_t reflect_index(std::int64_t i, std::size_t n);

// Stride-1 patch centered on `frame`, edges reflection-padded.
MelPatch extract_patch(const MelSpectrogram& spec, std::size_t frame);

// One patch per source frame.
std::vector<MelPatch> extract_patches(const MelSpectrogram& spec);

// Flat binary cache: "MELS", u32 n_frames, u32 n_bands, f64 hop_seconds,
// then row-major little-endian f32 values.
void write_mel_cache(const std::filesystem::path& path,
                     const MelSpectrogram& spec);
MelSpectrogram read_mel_cache(const std::filesystem::path& path);

// The same container with n_bands = 1 stores per-frame probability curves.
void write_curve_cache(const std::filesystem::path& path,
                       const std::vector<double>& values, double hop_seconds);
std::vector<double> read_curve_cache(const std::filesystem::path& path,
                                     double* hop_seconds);

}  // namespace voxalign

#endif  // VOXALIGN_MEL_HPP
