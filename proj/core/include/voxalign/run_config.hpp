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

#ifndef VOXALIGN_RUN_CONFIG_HPP
#define VOXALIGN_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "voxalign/alignment.hpp"
#include "voxalign/mel.hpp"
#include "voxalign/pipeline.hpp"
#include "voxalign/svd.hpp"

namespace voxalign {

// One declarative `key = value` file drives a whole run; the hash of the
// canonical serialization names the run directory, so identical configs
// land in identical places. `jobs` is an execution knob, not part of the
// result, and stays out of the hash.
struct RunConfig {
  // paths
  std::string manifest;
  std::string eval_manifest;
  std::string labeled_manifest;
  std::string model_in;
  std::string run_dir = "runs";

  // run
  std::uint64_t seed = 0;
  int rounds = 1;
  int jobs = 0;  // 0 = logical core count
  std::string policy = "aligned";
  double agreement_tolerance = 0.5;

  // features
  MelConfig mel;
  bool cache_mel = false;

  // search (hop_seconds always mirrors the feature hop)
  SearchConfig search;

  // svd
  int median_width = 9;
  std::string arch = "default";  // default | compact | path to a JSON file

  // train
  TrainHyper trainer;
  std::size_t frame_stride = 1;
  std::string train_source = "matches";  // matches | labeled

  // eval
  double eval_threshold = 0.5;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_text(const std::string& text);

  // `key=value`; unknown keys or malformed values raise ConfigError.
  void set(const std::string& key, const std::string& value);

  // Every effective key, sorted, one per line; hashing input.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string run_id() const;  // 16 hex digits of hash()

  std::filesystem::path run_path() const;  // run_dir / run_id
  ArchitectureConfig architecture() const;
  PipelineOptions pipeline_options(const std::filesystem::path& dir) const;
  int effective_jobs() const;

  // Re-derives dependent fields and checks value ranges; call after the
  // last set(). ConfigError on any violation.
  void finalize();
};

}  // namespace voxalign

#endif  // VOXALIGN_RUN_CONFIG_HPP
