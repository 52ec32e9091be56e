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

#ifndef VOXALIGN_AUDIO_HPP
#define VOXALIGN_AUDIO_HPP

#include <filesystem>
#include <vector>

namespace voxalign {

struct AudioBuffer {
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

// Reads a RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit, any channel
// count and rate), averages channels to mono and linearly resamples to
// `target_rate`. Throws IoError when the file cannot be read and
// FormatError for anything that is not decodable PCM.
AudioBuffer decode_audio(const std::filesystem::path& path, int target_rate);

// Mono linear-interpolation resampler; output length is
// round(n * target / source).
std::vector<float> resample_linear(const std::vector<float>& in,
                                   int source_rate, int target_rate);

}  // namespace voxalign

#endif  // VOXALIGN_AUDIO_HPP
