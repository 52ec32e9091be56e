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

#ifndef VOXALIGN_VERSION_HPP
#define VOXALIGN_VERSION_HPP

namespace voxalign {

inline constexpr const char* kVersion = "0.1.0";

// Algorithm used for run-config and model-descriptor hashing.
inline constexpr const char* kConfigHashAlgorithm = "fnv1a-64";

}  // namespace voxalign

#endif  // VOXALIGN_VERSION_HPP
