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

#include "voxalign/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "voxalign/errors.hpp"

namespace voxalign::fft {

namespace {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwPtr = std::unique_ptr<T[], FftwDeleter>;

template <typename T>
FftwPtr<T> fftw_alloc(std::size_t n) {
  return FftwPtr<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

// One forward + one inverse plan per transform size. The planner itself is
// not thread safe, so creation is serialized; execution on private buffers
// is safe.
class PlanCache {
 public:
  struct Plans {
    fftw_plan forward;
    fftw_plan inverse;
    ~Plans() {
      fftw_destroy_plan(forward);
      fftw_destroy_plan(inverse);
    }
  };

  static std::shared_ptr<Plans> get(std::size_t n) {
    static PlanCache cache;
    std::lock_guard<std::mutex> lock(cache.mutex_);
    auto it = cache.plans_.find(n);
    if (it != cache.plans_.end()) return it->second;

    auto real = fftw_alloc<double>(n);
    auto cplx = fftw_alloc<fftw_complex>(n / 2 + 1);
    auto plans = std::make_shared<Plans>();
    plans->forward =
        fftw_plan_dft_r2c_1d(static_cast<int>(n), real.get(), cplx.get(),
                             FFTW_ESTIMATE);
    plans->inverse =
        fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx.get(), real.get(),
                             FFTW_ESTIMATE);
    cache.plans_.emplace(n, plans);
    return plans;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::size_t, std::shared_ptr<Plans>> plans_;
};

std::vector<std::complex<double>> forward_padded(
    const std::vector<double>& input, std::size_t n) {
  auto plans = PlanCache::get(n);
  auto real = fftw_alloc<double>(n);
  auto cplx = fftw_alloc<fftw_complex>(n / 2 + 1);
  std::memcpy(real.get(), input.data(), sizeof(double) * input.size());
  std::memset(real.get() + input.size(), 0,
              sizeof(double) * (n - input.size()));
  fftw_execute_dft_r2c(plans->forward, real.get(), cplx.get());
  std::vector<std::complex<double>> out(n / 2 + 1);
  std::memcpy(out.data(), cplx.get(), sizeof(fftw_complex) * out.size());
  return out;
}

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<std::complex<double>> forward(const std::vector<double>& input) {
  if (input.empty()) throw ShapeError("fft: empty input");
  return forward_padded(input, input.size());
}

std::vector<double> inverse(const std::vector<std::complex<double>>& spectrum,
                            std::size_t n) {
  if (spectrum.size() != n / 2 + 1)
    throw ShapeError("fft: spectrum size does not match transform length");
  auto plans = PlanCache::get(n);
  auto real = fftw_alloc<double>(n);
  auto cplx = fftw_alloc<fftw_complex>(n / 2 + 1);
  std::memcpy(cplx.get(), spectrum.data(),
              sizeof(fftw_complex) * spectrum.size());
  fftw_execute_dft_c2r(plans->inverse, cplx.get(), real.get());
  std::vector<double> out(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = real.get()[i] * scale;
  return out;
}

PaddedSpectrum prepare_padded(const std::vector<double>& b, std::size_t n) {
  if (b.empty() || n < b.size())
    throw ShapeError("fft: bad padded spectrum size");
  PaddedSpectrum s;
  s.bins = forward_padded(b, n);
  s.n = n;
  s.original_length = b.size();
  return s;
}

std::vector<double> cross_correlate_prepared(const std::vector<double>& a,
                                             const PaddedSpectrum& b) {
  const std::size_t la = a.size();
  const std::size_t lb = b.original_length;
  if (la == 0) throw ShapeError("fft: empty correlation input");
  const std::size_t want = la + lb - 1;
  if (b.n < want)
    throw ShapeError("fft: prepared spectrum too short for correlation");

  // c[s] = sum_t a[t - s] b[t] = IFFT(conj(FFT(a)) * FFT(b)), with negative
  // lags wrapped to the top of the buffer.
  std::vector<std::complex<double>> fa = forward_padded(a, b.n);
  for (std::size_t i = 0; i < fa.size(); ++i)
    fa[i] = std::conj(fa[i]) * b.bins[i];
  std::vector<double> circular = inverse(fa, b.n);

  std::vector<double> out(want);
  for (std::size_t i = 0; i < la - 1; ++i) {
    // shift s = -(la - 1) + i  -> circular index n + s
    out[i] = circular[b.n - (la - 1) + i];
  }
  for (std::size_t s = 0; s < lb; ++s) out[la - 1 + s] = circular[s];
  return out;
}

std::vector<double> cross_correlate(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  if (a.empty() || b.empty())
    throw ShapeError("fft: empty correlation input");
  const std::size_t n = next_pow2(a.size() + b.size() - 1);
  return cross_correlate_prepared(a, prepare_padded(b, n));
}

}  // namespace voxalign::fft
