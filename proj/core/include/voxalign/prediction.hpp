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

#ifndef VOXALIGN_PREDICTION_HPP
#define VOXALIGN_PREDICTION_HPP

#include <vector>

namespace voxalign {

// Singing-voice probability per analysis frame, one value per source
// spectrogram frame.
struct PredictionSequence {
  std::vector<double> probs;  // each in [0, 1]
  double hop_seconds = 0.0;

  std::size_t size() const { return probs.size(); }
};

}  // namespace voxalign

#endif  // VOXALIGN_PREDICTION_HPP
