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

#include "voxalign/mel.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "internal_util.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/fft.hpp"

namespace voxalign {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_f64(std::string& out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

static_assert(std::endian::native == std::endian::little,
              "cache and model formats assume a little-endian host");

}  // namespace

MelFilterbank mel_filterbank(const MelConfig& cfg) {
  if (cfg.sample_rate <= 0 || cfg.window <= 0)
    throw ConfigError("mel: bad sample rate or window");
  if (!(cfg.mel_min_hz >= 0.0) || cfg.mel_max_hz <= cfg.mel_min_hz)
    throw ConfigError("mel: bad frequency range");

  const std::size_t n_bins = static_cast<std::size_t>(cfg.window) / 2 + 1;
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.window;

  // 82 mel-spaced edges give 80 triangles.
  std::vector<double> edges_hz(kMelBands + 2);
  const double mel_lo = hz_to_mel(cfg.mel_min_hz);
  const double mel_hi = hz_to_mel(cfg.mel_max_hz);
  for (int i = 0; i < kMelBands + 2; ++i)
    edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kMelBands + 1));

  MelFilterbank fb;
  fb.rows.resize(kMelBands);
  fb.center_hz.resize(kMelBands);
  for (int b = 0; b < kMelBands; ++b) {
    const double f_lo = edges_hz[b];
    const double f_c = edges_hz[b + 1];
    const double f_hi = edges_hz[b + 2];
    fb.center_hz[b] = f_c;
    MelFilterbank::Row& row = fb.rows[b];
    std::vector<double> weights;
    std::size_t first = 0;
    bool started = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > f_lo && f < f_c) w = (f - f_lo) / (f_c - f_lo);
      else if (f >= f_c && f < f_hi) w = (f_hi - f) / (f_hi - f_c);
      if (w > 0.0) {
        if (!started) {
          first = k;
          started = true;
        }
        weights.push_back(w);
      } else if (started) {
        break;
      }
    }
    if (!started)
      throw ConfigError("mel: band " + std::to_string(b) +
                        " has no FFT bins; window too short for this range");
    row.first_bin = first;
    row.weights = std::move(weights);
  }
  return fb;
}

MelSpectrogram compute_mel_spectrogram(const AudioBuffer& audio,
                                       const MelConfig& cfg) {
  if (audio.samples.empty()) throw FormatError("mel: empty audio buffer");
  if (static_cast<int>(audio.samples.size()) < cfg.window)
    throw FormatError("mel: buffer shorter than one analysis window");

  const std::size_t n_frames =
      (audio.samples.size() - cfg.window) / cfg.hop + 1;
  const MelFilterbank fb = mel_filterbank(cfg);

  std::vector<double> hann(cfg.window);
  for (int i = 0; i < cfg.window; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (cfg.window - 1));

  MelSpectrogram spec;
  spec.n_frames = n_frames;
  spec.hop_seconds = cfg.hop_seconds();
  spec.values.resize(n_frames * kMelBands);

  std::vector<double> windowed(cfg.window);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * cfg.hop;
    for (int i = 0; i < cfg.window; ++i)
      windowed[i] = audio.samples[start + i] * hann[i];
    const auto bins = fft::forward(windowed);
    for (int b = 0; b < kMelBands; ++b) {
      const MelFilterbank::Row& row = fb.rows[b];
      double acc = 0.0;
      for (std::size_t k = 0; k < row.weights.size(); ++k)
        acc += row.weights[k] * std::abs(bins[row.first_bin + k]);
      spec.values[f * kMelBands + b] = static_cast<float>(std::log1p(acc));
    }
  }
  return spec;
}

std::size_t reflect_index(std::int64_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (static_cast<std::int64_t>(n) - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::int64_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

MelPatch extract_patch(const MelSpectrogram& spec, std::size_t frame) {
  if (spec.n_frames == 0) throw ShapeError("extract_patch: empty spectrogram");
  MelPatch patch;
  patch.center_frame = frame;
  patch.values.resize(static_cast<std::size_t>(kMelBands) * kPatchFrames);
  for (int j = 0; j < kPatchFrames; ++j) {
    const std::size_t src = reflect_index(
        static_cast<std::int64_t>(frame) + j - kPatchCenter, spec.n_frames);
    const float* col = &spec.values[src * kMelBands];
    for (int b = 0; b < kMelBands; ++b)
      patch.values[static_cast<std::size_t>(b) * kPatchFrames + j] = col[b];
  }
  return patch;
}

std::vector<MelPatch> extract_patches(const MelSpectrogram& spec) {
  std::vector<MelPatch> patches;
  patches.reserve(spec.n_frames);
  for (std::size_t f = 0; f < spec.n_frames; ++f)
    patches.push_back(extract_patch(spec, f));
  return patches;
}

namespace {

void write_cache_impl(const std::filesystem::path& path, std::uint32_t frames,
                      std::uint32_t bands, double hop,
                      const float* data) {
  std::string out;
  out.reserve(20 + sizeof(float) * frames * bands);
  out += "MELS";
  put_u32(out, frames);
  put_u32(out, bands);
  put_f64(out, hop);
  out.append(reinterpret_cast<const char*>(data),
             sizeof(float) * static_cast<std::size_t>(frames) * bands);
  detail::write_file(path, out);
}

struct CacheHeader {
  std::uint32_t frames;
  std::uint32_t bands;
  double hop;
  const char* data;
};

CacheHeader read_cache_impl(const std::string& bytes) {
  if (bytes.size() < 20 || bytes.compare(0, 4, "MELS") != 0)
    throw FormatError("not a MELS cache file");
  CacheHeader h{};
  std::memcpy(&h.frames, bytes.data() + 4, 4);
  std::memcpy(&h.bands, bytes.data() + 8, 4);
  std::memcpy(&h.hop, bytes.data() + 12, 8);
  const std::size_t want =
      20 + sizeof(float) * static_cast<std::size_t>(h.frames) * h.bands;
  if (bytes.size() != want) throw FormatError("MELS cache size mismatch");
  h.data = bytes.data() + 20;
  return h;
}

}  // namespace

void write_mel_cache(const std::filesystem::path& path,
                     const MelSpectrogram& spec) {
  write_cache_impl(path, static_cast<std::uint32_t>(spec.n_frames), kMelBands,
                   spec.hop_seconds, spec.values.data());
}

MelSpectrogram read_mel_cache(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  const CacheHeader h = read_cache_impl(bytes);
  if (h.bands != kMelBands)
    throw FormatError("MELS cache has wrong band count");
  MelSpectrogram spec;
  spec.n_frames = h.frames;
  spec.hop_seconds = h.hop;
  spec.values.resize(static_cast<std::size_t>(h.frames) * kMelBands);
  std::memcpy(spec.values.data(), h.data, sizeof(float) * spec.values.size());
  return spec;
}

void write_curve_cache(const std::filesystem::path& path,
                       const std::vector<double>& values, double hop_seconds) {
  std::vector<float> f32(values.begin(), values.end());
  write_cache_impl(path, static_cast<std::uint32_t>(f32.size()), 1,
                   hop_seconds, f32.data());
}

std::vector<double> read_curve_cache(const std::filesystem::path& path,
                                     double* hop_seconds) {
  const std::string bytes = detail::read_file(path);
  const CacheHeader h = read_cache_impl(bytes);
  if (h.bands != 1) throw FormatError("curve cache has wrong band count");
  if (hop_seconds != nullptr) *hop_seconds = h.hop;
  std::vector<double> out(h.frames);
  const float* src = reinterpret_cast<const float*>(h.data);
  for (std::uint32_t i = 0; i < h.frames; ++i) out[i] = src[i];
  return out;
}

}  // namespace voxalign
