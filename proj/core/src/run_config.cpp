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

#include "voxalign/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <thread>

#include "internal_util.hpp"
#include "voxalign/errors.hpp"

namespace voxalign {

namespace {

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(key + ": malformed number \"" + value + "\"");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(key + ": malformed integer \"" + value + "\"");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(key + ": malformed unsigned integer \"" + value + "\"");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got \"" + value + "\"");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "manifest") manifest = value;
  else if (key == "eval_manifest") eval_manifest = value;
  else if (key == "labeled_manifest") labeled_manifest = value;
  else if (key == "model_in") model_in = value;
  else if (key == "run_dir") run_dir = value;
  else if (key == "seed") seed = to_u64(key, value);
  else if (key == "rounds") rounds = static_cast<int>(to_int(key, value));
  else if (key == "jobs") jobs = static_cast<int>(to_int(key, value));
  else if (key == "policy") policy = value;
  else if (key == "agreement_tolerance") agreement_tolerance = to_double(key, value);
  else if (key == "features.sample_rate") mel.sample_rate = static_cast<int>(to_int(key, value));
  else if (key == "features.window") mel.window = static_cast<int>(to_int(key, value));
  else if (key == "features.hop") mel.hop = static_cast<int>(to_int(key, value));
  else if (key == "features.mel_min_hz") mel.mel_min_hz = to_double(key, value);
  else if (key == "features.mel_max_hz") mel.mel_max_hz = to_double(key, value);
  else if (key == "features.cache_mel") cache_mel = to_bool(key, value);
  else if (key == "search.alpha_ratio") search.alpha_ratio = to_double(key, value);
  else if (key == "search.fr_steps") search.fr_steps = static_cast<int>(to_int(key, value));
  else if (key == "search.t_corr") search.t_corr = to_double(key, value);
  else if (key == "search.max_abs_offset_seconds") {
    if (value == "none" || value.empty())
      search.max_abs_offset_seconds.reset();
    else
      search.max_abs_offset_seconds = to_double(key, value);
  } else if (key == "svd.median_width") median_width = static_cast<int>(to_int(key, value));
  else if (key == "svd.arch") arch = value;
  else if (key == "train.batch") trainer.batch_size = static_cast<int>(to_int(key, value));
  else if (key == "train.epochs") trainer.epochs = static_cast<int>(to_int(key, value));
  else if (key == "train.step") trainer.step = to_double(key, value);
  else if (key == "train.beta1") trainer.beta1 = to_double(key, value);
  else if (key == "train.beta2") trainer.beta2 = to_double(key, value);
  else if (key == "train.epsilon") trainer.epsilon = to_double(key, value);
  else if (key == "train.frame_stride") frame_stride = static_cast<std::size_t>(to_int(key, value));
  else if (key == "train.source") train_source = value;
  else if (key == "eval.threshold") eval_threshold = to_double(key, value);
  else throw ConfigError("unknown config key \"" + key + "\"");
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    cfg.set(key, value);
  }
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  return from_text(detail::read_file(path));
}

void RunConfig::finalize() {
  if (mel.sample_rate <= 0 || mel.window <= 0 || mel.hop <= 0)
    throw ConfigError("feature parameters must be positive");
  search.hop_seconds = mel.hop_seconds();
  validate(search);
  parse_policy_kind(policy);
  if (!(agreement_tolerance >= 0.0 && agreement_tolerance < 1.0))
    throw ConfigError("agreement_tolerance must lie in [0, 1)");
  if (median_width < 1 || median_width % 2 == 0)
    throw ConfigError("svd.median_width must be odd and positive");
  if (trainer.batch_size < 1) throw ConfigError("train.batch must be positive");
  if (trainer.epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (frame_stride < 1) throw ConfigError("train.frame_stride must be positive");
  if (train_source != "matches" && train_source != "labeled")
    throw ConfigError("train.source must be matches or labeled");
  if (rounds < 1) throw ConfigError("rounds must be at least 1");
  if (!(eval_threshold >= 0.0 && eval_threshold <= 1.0))
    throw ConfigError("eval.threshold must lie in [0, 1]");
  trainer.seed = seed;
}

std::string RunConfig::canonical() const {
  auto d = [](double v) { return detail::format_double_shortest(v); };
  std::string out;
  out += "agreement_tolerance=" + d(agreement_tolerance) + "\n";
  out += "eval.threshold=" + d(eval_threshold) + "\n";
  out += "eval_manifest=" + eval_manifest + "\n";
  out += "features.cache_mel=" + std::string(cache_mel ? "true" : "false") + "\n";
  out += "features.hop=" + std::to_string(mel.hop) + "\n";
  out += "features.mel_max_hz=" + d(mel.mel_max_hz) + "\n";
  out += "features.mel_min_hz=" + d(mel.mel_min_hz) + "\n";
  out += "features.sample_rate=" + std::to_string(mel.sample_rate) + "\n";
  out += "features.window=" + std::to_string(mel.window) + "\n";
  out += "labeled_manifest=" + labeled_manifest + "\n";
  out += "manifest=" + manifest + "\n";
  out += "model_in=" + model_in + "\n";
  out += "policy=" + policy + "\n";
  out += "rounds=" + std::to_string(rounds) + "\n";
  out += "run_dir=" + run_dir + "\n";
  out += "search.alpha_ratio=" + d(search.alpha_ratio) + "\n";
  out += "search.fr_steps=" + std::to_string(search.fr_steps) + "\n";
  out += "search.max_abs_offset_seconds=" +
         (search.max_abs_offset_seconds ? d(*search.max_abs_offset_seconds)
                                        : std::string("none")) + "\n";
  out += "search.t_corr=" + d(search.t_corr) + "\n";
  out += "seed=" + std::to_string(seed) + "\n";
  out += "svd.arch=" + arch + "\n";
  out += "svd.median_width=" + std::to_string(median_width) + "\n";
  out += "train.batch=" + std::to_string(trainer.batch_size) + "\n";
  out += "train.beta1=" + d(trainer.beta1) + "\n";
  out += "train.beta2=" + d(trainer.beta2) + "\n";
  out += "train.epochs=" + std::to_string(trainer.epochs) + "\n";
  out += "train.epsilon=" + d(trainer.epsilon) + "\n";
  out += "train.frame_stride=" + std::to_string(frame_stride) + "\n";
  out += "train.source=" + train_source + "\n";
  out += "train.step=" + d(trainer.step) + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return detail::fnv1a64(canonical()); }

std::string RunConfig::run_id() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash()));
  return buf;
}

std::filesystem::path RunConfig::run_path() const {
  return std::filesystem::path(run_dir) / run_id();
}

ArchitectureConfig RunConfig::architecture() const {
  if (arch == "default") return ArchitectureConfig::default_config();
  if (arch == "compact") return ArchitectureConfig::compact_config();
  return ArchitectureConfig::from_json(detail::read_file(arch));
}

int RunConfig::effective_jobs() const {
  if (jobs > 0) return jobs;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

PipelineOptions RunConfig::pipeline_options(
    const std::filesystem::path& dir) const {
  PipelineOptions opts;
  opts.mel = mel;
  opts.search = search;
  opts.median_width = median_width;
  opts.jobs = effective_jobs();
  opts.cache_mel = cache_mel;
  opts.run_dir = dir;
  return opts;
}

}  // namespace voxalign
