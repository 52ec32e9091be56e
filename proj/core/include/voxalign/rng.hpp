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

#ifndef VOXALIGN_RNG_HPP
#define VOXALIGN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Deterministic sampling helpers. std::mt19937_64 is fully specified by the
// standard, but the std distributions are not; everything that must reproduce
// bit-for-bit across toolchains goes through these instead.

namespace voxalign::rng {

// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

// Uniform double in [0, 1) with 53 bits of randomness.
inline double unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * unit(gen);
}

// Box-Muller; one value per call, the sibling draw is discarded.
inline double gaussian(std::mt19937_64& gen, double mean, double sigma) {
  double u1 = unit(gen);
  double u2 = unit(gen);
  while (u1 <= 0.0) u1 = unit(gen);
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sigma * r * std::cos(2.0 * M_PI * u2);
}

// Fisher-Yates with the bounded() draw above.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded(gen, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace voxalign::rng

#endif  // VOXALIGN_RNG_HPP
