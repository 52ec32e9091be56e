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

#ifndef VOXALIGN_SVD_HPP
#define VOXALIGN_SVD_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxalign/mel.hpp"
#include "voxalign/prediction.hpp"

// Singing-voice detection: a small ConvNet that maps one mel patch to the
// voice probability of the patch's center frame. Everything here is plain
// double-precision CPU code; analytic gradients are checked against finite
// differences in the test suite.

namespace voxalign {

struct ArchitectureConfig {
  struct Layer {
    enum class Kind { kConv, kMaxPool, kDense };
    Kind kind = Kind::kDense;
    int filters = 0;      // conv: output channels
    int kernel = 0;       // conv: square kernel side
    int pool = 0;         // maxpool: window side == stride
    int units = 0;        // dense: output size
    int dense_inputs = -1;  // dense: optional declared input size
    bool operator==(const Layer&) const = default;
  };

  int input_bands = kMelBands;
  int input_frames = kPatchFrames;
  std::vector<Layer> layers;

  bool operator==(const ArchitectureConfig&) const = default;

  // conv 3x3x8 -> pool 3 -> conv 3x3x16 -> pool 3 -> dense 32 -> dense 1
  static ArchitectureConfig default_config();
  // A lighter variant for quick runs on small corpora.
  static ArchitectureConfig compact_config();

  static ArchitectureConfig from_json(const std::string& text);
  std::string to_json() const;  // canonical; hashing input
};

struct Tensor {
  std::vector<double> data;
  std::vector<std::size_t> shape;

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

// Per-layer output extents; c*h*w is the flattened size fed to dense layers.
struct LayerDims {
  int h = 0, w = 0, c = 0;
  std::size_t flat() const {
    return static_cast<std::size_t>(h) * w * c;
  }
};

// Shapes after the input and after every layer; throws ConfigError when the
// layers do not compose or the last layer is not dense(1).
std::vector<LayerDims> compute_layer_dims(const ArchitectureConfig& arch);

struct SvdModel {
  ArchitectureConfig arch;
  std::vector<Tensor> weights;  // parallel to arch.layers; empty for pools
  std::vector<Tensor> biases;
  std::vector<double> norm_mean;  // per input band, applied before layer 0
  std::vector<double> norm_std;

  std::uint64_t config_hash() const;
};

// Deterministic uniform fan-in initialization; biases start at zero and the
// normalization is identity until train() fills it in.
SvdModel init_model(const ArchitectureConfig& arch, std::uint64_t seed);

// Trainable tensors in a fixed order (weight then bias per layer).
std::vector<Tensor*> parameter_tensors(SvdModel& model);
std::vector<const Tensor*> parameter_tensors(const SvdModel& model);

// Rounds every parameter and normalization value through float so the
// in-memory model matches its on-disk form exactly.
void quantize_to_f32(SvdModel& model);

double forward(const SvdModel& model, const MelPatch& patch);

struct ForwardDiagnostics {
  double min_abs_preactivation = 0.0;  // distance to the nearest ReLU kink
  double min_pool_gap = 0.0;           // smallest max-vs-runner-up pool margin
};
double forward_with_diagnostics(const SvdModel& model, const MelPatch& patch,
                                ForwardDiagnostics* diag);

struct TrainingExample {
  MelPatch patch;
  double target = 0.0;  // in [0, 1]
  double weight = 1.0;  // >= 0; zero masks the example out entirely
};

// Random-access stream of examples; implementations materialize patches on
// demand so corpora never have to fit in memory as patch tensors.
class TrainingSource {
 public:
  virtual ~TrainingSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainingExample example(std::size_t index) const = 0;
};

class VectorTrainingSource : public TrainingSource {
 public:
  explicit VectorTrainingSource(std::vector<TrainingExample> examples)
      : examples_(std::move(examples)) {}
  std::size_t size() const override { return examples_.size(); }
  TrainingExample example(std::size_t i) const override { return examples_[i]; }

 private:
  std::vector<TrainingExample> examples_;
};

struct TrainHyper {
  int batch_size = 128;
  int epochs = 10;
  double step = 0.002;  // ADAMAX step size
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

// Weighted cross-entropy training with ADAMAX. Shuffling, batching and the
// reduction order are all deterministic in (model, data, hyper). epochs == 0
// returns the model untouched. Writes one `epoch<TAB>loss<TAB>accuracy`
// line per epoch to `log` when given.
SvdModel train(SvdModel model, const TrainingSource& data,
               const TrainHyper& hyper, std::ostream* log = nullptr);

// Loss of one example, w * ce(target, p); used directly by the
// finite-difference checks.
double example_loss(const SvdModel& model, const TrainingExample& ex);

// d(example_loss)/d(theta) in parameter_tensors() order.
std::vector<Tensor> example_gradients(const SvdModel& model,
                                      const TrainingExample& ex);

double weighted_cross_entropy(const std::vector<double>& probs,
                              const std::vector<double>& targets,
                              const std::vector<double>& weights);

// Per-frame probability for every spectrogram frame, smoothed with a
// centered median filter (window shrinks symmetrically at the edges).
PredictionSequence predict_sequence(const SvdModel& model,
                                    const MelSpectrogram& spec,
                                    int median_width = 9);

std::vector<double> median_filter(const std::vector<double>& values,
                                  int width);

// Self-describing binary model file ("SVDM").
void save_model(const SvdModel& model, const std::filesystem::path& path);
SvdModel load_model(const std::filesystem::path& path);

}  // namespace voxalign

#endif  // VOXALIGN_SVD_HPP
