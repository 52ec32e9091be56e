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

#ifndef VOXALIGN_FFT_HPP
#define VOXALIGN_FFT_HPP

#include <complex>
#include <cstddef>
#include <vector>

// Thin real-to-complex FFT layer over FFTW. Plans are created with
// FFTW_ESTIMATE so a given transform size always maps to the same algorithm
// and therefore to bit-identical output. The plan cache is safe for
// concurrent readers.

namespace voxalign::fft {

std::size_t next_pow2(std::size_t n);

// Forward r2c transform; output has n/2 + 1 bins.
std::vector<std::complex<double>> forward(const std::vector<double>& input);

// Inverse c2r transform of length n, normalized by 1/n.
std::vector<double> inverse(const std::vector<std::complex<double>>& spectrum,
                            std::size_t n);

// Linear cross-correlation c[s] = sum_t a[t - s] * b[t] for
// s in [-(len(a) - 1), len(b) - 1], returned in that order.
std::vector<double> cross_correlate(const std::vector<double>& a,
                                    const std::vector<double>& b);

// Same correlation against a precomputed spectrum of b (padded to size n);
// used when one side is fixed across many calls.
struct PaddedSpectrum {
  std::vector<std::complex<double>> bins;
  std::size_t n = 0;
  std::size_t original_length = 0;
};

PaddedSpectrum prepare_padded(const std::vector<double>& b, std::size_t n);
std::vector<double> cross_correlate_prepared(const std::vector<double>& a,
                                             const PaddedSpectrum& b);

}  // namespace voxalign::fft

#endif  // VOXALIGN_FFT_HPP
