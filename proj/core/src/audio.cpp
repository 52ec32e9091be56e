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

#include "voxalign/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>

#include "internal_util.hpp"
#include "voxalign/errors.hpp"

namespace voxalign {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct Reader {
  const unsigned char* p;
  std::size_t remaining;

  void need(std::size_t n) const {
    if (remaining < n) throw FormatError("truncated WAV file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                      static_cast<std::uint32_t>(p[1]) << 8 |
                      static_cast<std::uint32_t>(p[2]) << 16 |
                      static_cast<std::uint32_t>(p[3]) << 24;
    p += 4;
    remaining -= 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | p[1] << 8);
    p += 2;
    remaining -= 2;
    return v;
  }
  void tag(char out[4]) {
    need(4);
    std::memcpy(out, p, 4);
    p += 4;
    remaining -= 4;
  }
  void skip(std::size_t n) {
    need(n);
    p += n;
    remaining -= n;
  }
};

}  // namespace

std::vector<float> resample_linear(const std::vector<float>& in,
                                   int source_rate, int target_rate) {
  if (source_rate <= 0 || target_rate <= 0)
    throw FormatError("resample: rates must be positive");
  if (source_rate == target_rate || in.empty()) return in;

  const std::size_t n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(in.size()) * target_rate / source_rate));
  std::vector<float> out(n_out);
  const double step = static_cast<double>(source_rate) / target_rate;
  for (std::size_t k = 0; k < n_out; ++k) {
    const double pos = static_cast<double>(k) * step;
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= in.size()) {
      out[k] = in.back();
    } else {
      const double frac = pos - static_cast<double>(i);
      out[k] = static_cast<float>((1.0 - frac) * in[i] + frac * in[i + 1]);
    }
  }
  return out;
}

AudioBuffer decode_audio(const std::filesystem::path& path, int target_rate) {
  if (target_rate <= 0) throw FormatError("target sample rate must be positive");
  const std::string bytes = detail::read_file(path);
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};

  char tag[4];
  r.tag(tag);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError("not a RIFF file");
  r.u32();  // declared riff size; the actual buffer length is authoritative
  r.tag(tag);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError("not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  while (r.remaining >= 8) {
    r.tag(tag);
    std::uint32_t chunk_len = r.u32();
    if (chunk_len > r.remaining) throw FormatError("truncated WAV chunk");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw FormatError("short fmt chunk");
      Reader f{r.p, chunk_len};
      format = f.u16();
      channels = f.u16();
      rate = f.u32();
      f.u32();  // byte rate
      f.u16();  // block align
      bits = f.u16();
      if (format == kFormatExtensible && chunk_len >= 40) {
        Reader e{f.p, f.remaining};
        e.u16();              // cbSize
        e.u16();              // valid bits
        e.u32();              // channel mask
        format = e.u16();     // first two bytes of the sub-format GUID
      }
      have_fmt = true;
      r.skip(chunk_len);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = r.p;
      data_len = chunk_len;
      r.skip(chunk_len);
    } else {
      r.skip(chunk_len);
    }
    if (chunk_len % 2 == 1 && r.remaining > 0) r.skip(1);  // pad byte
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (data == nullptr) throw FormatError("missing data chunk");
  if (channels == 0 || rate == 0) throw FormatError("bad fmt parameters");

  std::size_t bytes_per_sample;
  if (format == kFormatPcm && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == kFormatFloat && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw FormatError("unsupported WAV encoding (want PCM s16 or float32)");
  }

  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n_frames = data_len / frame_bytes;
  if (n_frames == 0) throw FormatError("zero-length audio data");

  std::vector<float> mono(n_frames);
  const double inv_channels = 1.0 / channels;
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    const unsigned char* frame = data + f * frame_bytes;
    for (std::size_t c = 0; c < channels; ++c) {
      if (bytes_per_sample == 2) {
        std::int16_t s;
        std::memcpy(&s, frame + 2 * c, 2);
        acc += static_cast<double>(s) / 32768.0;
      } else {
        float s;
        std::memcpy(&s, frame + 4 * c, 4);
        acc += static_cast<double>(s);
      }
    }
    mono[f] = static_cast<float>(acc * inv_channels);
  }

  AudioBuffer buffer;
  buffer.sample_rate = target_rate;
  buffer.samples = resample_linear(mono, static_cast<int>(rate), target_rate);
  return buffer;
}

}  // namespace voxalign
