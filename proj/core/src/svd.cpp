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

#include "voxalign/svd.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <ostream>
#include <random>

#include "json.hpp"

#include "internal_util.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/rng.hpp"

namespace voxalign {

namespace {

using Kind = ArchitectureConfig::Layer::Kind;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// -[t log p + (1-t) log(1-p)] evaluated from the logit, no clamping needed.
double cross_entropy_from_logit(double z, double target) {
  return softplus(-z) + (1.0 - target) * z;
}

double clamp_probability(double p) {
  return std::min(std::max(p, 1e-15), 1.0 - 1e-15);
}

bool layer_has_params(const ArchitectureConfig::Layer& l) {
  return l.kind != Kind::kMaxPool;
}

// Scratch buffers for one forward/backward pass. Activation layout is
// channel-major: index (c * h + y) * w + x.
struct Runtime {
  const SvdModel& model;
  std::vector<LayerDims> dims;
  std::vector<std::vector<double>> acts;   // acts[0] = input, acts[i+1] = layer i out
  std::vector<std::vector<double>> dacts;
  std::vector<std::vector<std::int32_t>> pool_src;
  std::vector<std::vector<std::uint8_t>> relu_mask;

  explicit Runtime(const SvdModel& m)
      : model(m), dims(compute_layer_dims(m.arch)) {
    const std::size_t n = m.arch.layers.size();
    acts.resize(n + 1);
    dacts.resize(n + 1);
    pool_src.resize(n);
    relu_mask.resize(n);
    for (std::size_t i = 0; i <= n; ++i) {
      acts[i].resize(dims[i].flat());
      dacts[i].resize(dims[i].flat());
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (m.arch.layers[i].kind == Kind::kMaxPool)
        pool_src[i].resize(dims[i + 1].flat());
      else
        relu_mask[i].resize(dims[i + 1].flat());
    }
  }

  void load_input(const float* patch) {
    const int bands = model.arch.input_bands;
    const int frames = model.arch.input_frames;
    for (int b = 0; b < bands; ++b) {
      const double mean = model.norm_mean[b];
      const double inv_std = 1.0 / model.norm_std[b];
      double* dst = &acts[0][static_cast<std::size_t>(b) * frames];
      const float* src = patch + static_cast<std::size_t>(b) * frames;
      for (int j = 0; j < frames; ++j)
        dst[j] = (static_cast<double>(src[j]) - mean) * inv_std;
    }
  }

  // Returns the final logit.
  double forward(const float* patch, ForwardDiagnostics* diag) {
    if (diag != nullptr) {
      diag->min_abs_preactivation = std::numeric_limits<double>::infinity();
      diag->min_pool_gap = std::numeric_limits<double>::infinity();
    }
    load_input(patch);
    const std::size_t n = model.arch.layers.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& layer = model.arch.layers[i];
      const LayerDims in = dims[i];
      const LayerDims out = dims[i + 1];
      const std::vector<double>& x = acts[i];
      std::vector<double>& y = acts[i + 1];
      const bool last = i + 1 == n;

      switch (layer.kind) {
        case Kind::kConv: {
          const Tensor& w = model.weights[i];
          const Tensor& bias = model.biases[i];
          const int k = layer.kernel;
          for (int f = 0; f < out.c; ++f)
            std::fill_n(&y[static_cast<std::size_t>(f) * out.h * out.w],
                        static_cast<std::size_t>(out.h) * out.w, bias.data[f]);
          for (int f = 0; f < out.c; ++f) {
            for (int c = 0; c < in.c; ++c) {
              for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                  const double wv =
                      w.data[((static_cast<std::size_t>(f) * in.c + c) * k +
                              ky) * k + kx];
                  for (int yy = 0; yy < out.h; ++yy) {
                    const double* xr =
                        &x[(static_cast<std::size_t>(c) * in.h + yy + ky) *
                               in.w + kx];
                    double* yr =
                        &y[(static_cast<std::size_t>(f) * out.h + yy) * out.w];
                    for (int xx = 0; xx < out.w; ++xx) yr[xx] += wv * xr[xx];
                  }
                }
              }
            }
          }
          std::uint8_t* mask = relu_mask[i].data();
          for (std::size_t j = 0; j < y.size(); ++j) {
            if (diag != nullptr)
              diag->min_abs_preactivation =
                  std::min(diag->min_abs_preactivation, std::abs(y[j]));
            mask[j] = y[j] > 0.0;
            if (y[j] < 0.0) y[j] = 0.0;
          }
          break;
        }
        case Kind::kMaxPool: {
          const int p = layer.pool;
          std::int32_t* src = pool_src[i].data();
          for (int c = 0; c < out.c; ++c) {
            for (int oy = 0; oy < out.h; ++oy) {
              for (int ox = 0; ox < out.w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                double runner = best;
                std::int32_t best_idx = -1;
                for (int py = 0; py < p; ++py) {
                  const std::size_t row =
                      (static_cast<std::size_t>(c) * in.h + oy * p + py) *
                          in.w + static_cast<std::size_t>(ox) * p;
                  for (int px = 0; px < p; ++px) {
                    const double v = x[row + px];
                    if (v > best) {
                      runner = best;
                      best = v;
                      best_idx = static_cast<std::int32_t>(row + px);
                    } else if (v > runner) {
                      runner = v;
                    }
                  }
                }
                const std::size_t oi =
                    (static_cast<std::size_t>(c) * out.h + oy) * out.w + ox;
                y[oi] = best;
                src[oi] = best_idx;
                if (diag != nullptr && p > 1)
                  diag->min_pool_gap =
                      std::min(diag->min_pool_gap, best - runner);
              }
            }
          }
          break;
        }
        case Kind::kDense: {
          const Tensor& w = model.weights[i];
          const Tensor& bias = model.biases[i];
          const std::size_t in_n = x.size();
          for (int u = 0; u < layer.units; ++u) {
            const double* wr = &w.data[static_cast<std::size_t>(u) * in_n];
            double acc = bias.data[u];
            for (std::size_t j = 0; j < in_n; ++j) acc += wr[j] * x[j];
            y[u] = acc;
          }
          if (!last) {
            std::uint8_t* mask = relu_mask[i].data();
            for (std::size_t j = 0; j < y.size(); ++j) {
              if (diag != nullptr)
                diag->min_abs_preactivation =
                    std::min(diag->min_abs_preactivation, std::abs(y[j]));
              mask[j] = y[j] > 0.0;
              if (y[j] < 0.0) y[j] = 0.0;
            }
          }
          break;
        }
      }
    }
    return acts[model.arch.layers.size()][0];
  }

  // Accumulates d(loss)/d(params) into gw/gb given d(loss)/d(logit).
  void backward(double dz, std::vector<Tensor>& gw, std::vector<Tensor>& gb) {
    const std::size_t n = model.arch.layers.size();
    for (auto& v : dacts) std::fill(v.begin(), v.end(), 0.0);
    dacts[n][0] = dz;

    for (std::size_t i = n; i-- > 0;) {
      const auto& layer = model.arch.layers[i];
      const LayerDims in = dims[i];
      const LayerDims out = dims[i + 1];
      std::vector<double>& dy = dacts[i + 1];
      std::vector<double>& dx = dacts[i];
      const std::vector<double>& x = acts[i];
      const bool last = i + 1 == n;

      if (layer.kind != Kind::kMaxPool && !last) {
        const std::uint8_t* mask = relu_mask[i].data();
        for (std::size_t j = 0; j < dy.size(); ++j)
          if (!mask[j]) dy[j] = 0.0;
      }

      switch (layer.kind) {
        case Kind::kConv: {
          const Tensor& w = model.weights[i];
          const int k = layer.kernel;
          for (int f = 0; f < out.c; ++f) {
            double gbias = 0.0;
            const double* dyr0 =
                &dy[static_cast<std::size_t>(f) * out.h * out.w];
            for (std::size_t j = 0;
                 j < static_cast<std::size_t>(out.h) * out.w; ++j)
              gbias += dyr0[j];
            gb[i].data[f] += gbias;
            for (int c = 0; c < in.c; ++c) {
              for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                  const std::size_t wi =
                      ((static_cast<std::size_t>(f) * in.c + c) * k + ky) * k +
                      kx;
                  const double wv = w.data[wi];
                  double gw_acc = 0.0;
                  for (int yy = 0; yy < out.h; ++yy) {
                    const double* xr =
                        &x[(static_cast<std::size_t>(c) * in.h + yy + ky) *
                               in.w + kx];
                    double* dxr =
                        &dx[(static_cast<std::size_t>(c) * in.h + yy + ky) *
                                in.w + kx];
                    const double* dyr =
                        &dy[(static_cast<std::size_t>(f) * out.h + yy) *
                            out.w];
                    for (int xx = 0; xx < out.w; ++xx) {
                      gw_acc += dyr[xx] * xr[xx];
                      dxr[xx] += dyr[xx] * wv;
                    }
                  }
                  gw[i].data[wi] += gw_acc;
                }
              }
            }
          }
          break;
        }
        case Kind::kMaxPool: {
          const std::int32_t* src = pool_src[i].data();
          for (std::size_t j = 0; j < dy.size(); ++j)
            dx[static_cast<std::size_t>(src[j])] += dy[j];
          break;
        }
        case Kind::kDense: {
          const Tensor& w = model.weights[i];
          const std::size_t in_n = x.size();
          for (int u = 0; u < layer.units; ++u) {
            const double g = dy[u];
            if (g == 0.0) continue;
            gb[i].data[u] += g;
            double* gwr = &gw[i].data[static_cast<std::size_t>(u) * in_n];
            const double* wr = &w.data[static_cast<std::size_t>(u) * in_n];
            for (std::size_t j = 0; j < in_n; ++j) {
              gwr[j] += g * x[j];
              dx[j] += g * wr[j];
            }
          }
          break;
        }
      }
    }
  }
};

std::vector<Tensor> zero_like_params(const SvdModel& model) {
  std::vector<Tensor> out(model.arch.layers.size());
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    out[i].shape = model.weights[i].shape;
    out[i].data.assign(model.weights[i].data.size(), 0.0);
  }
  return out;
}

std::vector<Tensor> zero_like_biases(const SvdModel& model) {
  std::vector<Tensor> out(model.arch.layers.size());
  for (std::size_t i = 0; i < model.biases.size(); ++i) {
    out[i].shape = model.biases[i].shape;
    out[i].data.assign(model.biases[i].data.size(), 0.0);
  }
  return out;
}

void check_patch_shape(const SvdModel& model, const MelPatch& patch) {
  const std::size_t want = static_cast<std::size_t>(model.arch.input_bands) *
                           model.arch.input_frames;
  if (patch.values.size() != want)
    throw ShapeError("patch has " + std::to_string(patch.values.size()) +
                     " values, model expects " + std::to_string(want));
}

}  // namespace

ArchitectureConfig ArchitectureConfig::default_config() {
  ArchitectureConfig a;
  a.layers = {
      {Kind::kConv, 8, 3, 0, 0, -1},  {Kind::kMaxPool, 0, 0, 3, 0, -1},
      {Kind::kConv, 16, 3, 0, 0, -1}, {Kind::kMaxPool, 0, 0, 3, 0, -1},
      {Kind::kDense, 0, 0, 0, 32, -1}, {Kind::kDense, 0, 0, 0, 1, -1},
  };
  return a;
}

ArchitectureConfig ArchitectureConfig::compact_config() {
  ArchitectureConfig a;
  a.layers = {
      {Kind::kConv, 4, 3, 0, 0, -1},  {Kind::kMaxPool, 0, 0, 3, 0, -1},
      {Kind::kConv, 8, 3, 0, 0, -1},  {Kind::kMaxPool, 0, 0, 3, 0, -1},
      {Kind::kDense, 0, 0, 0, 16, -1}, {Kind::kDense, 0, 0, 0, 1, -1},
  };
  return a;
}

std::string ArchitectureConfig::to_json() const {
  std::string out = "{\"input_bands\":" + std::to_string(input_bands) +
                    ",\"input_frames\":" + std::to_string(input_frames) +
                    ",\"layers\":[";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (i > 0) out += ",";
    switch (l.kind) {
      case Kind::kConv:
        out += "{\"type\":\"conv\",\"filters\":" + std::to_string(l.filters) +
               ",\"kernel\":" + std::to_string(l.kernel) + "}";
        break;
      case Kind::kMaxPool:
        out += "{\"type\":\"maxpool\",\"size\":" + std::to_string(l.pool) + "}";
        break;
      case Kind::kDense:
        out += "{\"type\":\"dense\",\"units\":" + std::to_string(l.units);
        if (l.dense_inputs >= 0)
          out += ",\"inputs\":" + std::to_string(l.dense_inputs);
        out += "}";
        break;
    }
  }
  out += "]}";
  return out;
}

ArchitectureConfig ArchitectureConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture descriptor: ") + e.what());
  }
  ArchitectureConfig a;
  try {
    a.input_bands = j.at("input_bands").get<int>();
    a.input_frames = j.at("input_frames").get<int>();
    for (const auto& jl : j.at("layers")) {
      Layer l;
      const std::string type = jl.at("type").get<std::string>();
      if (type == "conv") {
        l.kind = Kind::kConv;
        l.filters = jl.at("filters").get<int>();
        l.kernel = jl.at("kernel").get<int>();
      } else if (type == "maxpool") {
        l.kind = Kind::kMaxPool;
        l.pool = jl.at("size").get<int>();
      } else if (type == "dense") {
        l.kind = Kind::kDense;
        l.units = jl.at("units").get<int>();
        if (jl.contains("inputs")) l.dense_inputs = jl.at("inputs").get<int>();
      } else {
        throw ConfigError("unknown layer type \"" + type + "\"");
      }
      a.layers.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture descriptor: ") + e.what());
  }
  compute_layer_dims(a);  // surface composition errors early
  return a;
}

std::vector<LayerDims> compute_layer_dims(const ArchitectureConfig& arch) {
  if (arch.input_bands < 1 || arch.input_frames < 1)
    throw ConfigError("input shape must be positive");
  if (arch.layers.empty()) throw ConfigError("architecture has no layers");

  std::vector<LayerDims> dims;
  dims.push_back({arch.input_bands, arch.input_frames, 1});
  bool flattened = false;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const LayerDims in = dims.back();
    LayerDims out;
    switch (l.kind) {
      case Kind::kConv: {
        if (flattened) throw ConfigError("conv after dense layer");
        if (l.filters < 1 || l.kernel < 1)
          throw ConfigError("conv layer needs positive filters and kernel");
        out.h = in.h - l.kernel + 1;
        out.w = in.w - l.kernel + 1;
        out.c = l.filters;
        if (out.h < 1 || out.w < 1)
          throw ConfigError("conv kernel larger than its input");
        break;
      }
      case Kind::kMaxPool: {
        if (flattened) throw ConfigError("maxpool after dense layer");
        if (l.pool < 1) throw ConfigError("pool size must be positive");
        if (in.h < l.pool || in.w < l.pool)
          throw ConfigError("pool window larger than its input");
        out.h = (in.h - l.pool) / l.pool + 1;
        out.w = (in.w - l.pool) / l.pool + 1;
        out.c = in.c;
        break;
      }
      case Kind::kDense: {
        if (l.units < 1) throw ConfigError("dense layer needs positive units");
        if (l.dense_inputs >= 0 &&
            static_cast<std::size_t>(l.dense_inputs) != in.flat())
          throw ConfigError("dense layer " + std::to_string(i) + " declares " +
                            std::to_string(l.dense_inputs) +
                            " inputs but receives " +
                            std::to_string(in.flat()));
        out.h = 1;
        out.w = 1;
        out.c = l.units;
        flattened = true;
        break;
      }
    }
    dims.push_back(out);
  }
  const auto& last = arch.layers.back();
  if (last.kind != Kind::kDense || last.units != 1)
    throw ConfigError("final layer must be dense with a single unit");
  return dims;
}

std::uint64_t SvdModel::config_hash() const {
  return detail::fnv1a64(arch.to_json());
}

SvdModel init_model(const ArchitectureConfig& arch, std::uint64_t seed) {
  const std::vector<LayerDims> dims = compute_layer_dims(arch);
  SvdModel model;
  model.arch = arch;
  model.weights.resize(arch.layers.size());
  model.biases.resize(arch.layers.size());

  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (!layer_has_params(l)) continue;
    Tensor& w = model.weights[i];
    Tensor& b = model.biases[i];
    std::size_t fan_in;
    if (l.kind == Kind::kConv) {
      fan_in = static_cast<std::size_t>(dims[i].c) * l.kernel * l.kernel;
      w.shape = {static_cast<std::size_t>(l.filters),
                 static_cast<std::size_t>(dims[i].c),
                 static_cast<std::size_t>(l.kernel),
                 static_cast<std::size_t>(l.kernel)};
      b.shape = {static_cast<std::size_t>(l.filters)};
    } else {
      fan_in = dims[i].flat();
      w.shape = {static_cast<std::size_t>(l.units), fan_in};
      b.shape = {static_cast<std::size_t>(l.units)};
    }
    std::size_t w_n = 1;
    for (std::size_t s : w.shape) w_n *= s;
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    w.data.resize(w_n);
    for (double& v : w.data) v = rng::uniform(gen, -scale, scale);
    b.data.assign(b.shape[0], 0.0);
  }
  model.norm_mean.assign(arch.input_bands, 0.0);
  model.norm_std.assign(arch.input_bands, 1.0);
  quantize_to_f32(model);
  return model;
}

std::vector<Tensor*> parameter_tensors(SvdModel& model) {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    if (!layer_has_params(model.arch.layers[i])) continue;
    out.push_back(&model.weights[i]);
    out.push_back(&model.biases[i]);
  }
  return out;
}

std::vector<const Tensor*> parameter_tensors(const SvdModel& model) {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    if (!layer_has_params(model.arch.layers[i])) continue;
    out.push_back(&model.weights[i]);
    out.push_back(&model.biases[i]);
  }
  return out;
}

void quantize_to_f32(SvdModel& model) {
  auto q = [](std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  for (Tensor& t : model.weights) q(t.data);
  for (Tensor& t : model.biases) q(t.data);
  q(model.norm_mean);
  q(model.norm_std);
}

double forward(const SvdModel& model, const MelPatch& patch) {
  return forward_with_diagnostics(model, patch, nullptr);
}

double forward_with_diagnostics(const SvdModel& model, const MelPatch& patch,
                                ForwardDiagnostics* diag) {
  check_patch_shape(model, patch);
  Runtime rt(model);
  const double z = rt.forward(patch.values.data(), diag);
  return clamp_probability(sigmoid(z));
}

double example_loss(const SvdModel& model, const TrainingExample& ex) {
  check_patch_shape(model, ex.patch);
  Runtime rt(model);
  const double z = rt.forward(ex.patch.values.data(), nullptr);
  return ex.weight * cross_entropy_from_logit(z, ex.target);
}

std::vector<Tensor> example_gradients(const SvdModel& model,
                                      const TrainingExample& ex) {
  check_patch_shape(model, ex.patch);
  Runtime rt(model);
  const double z = rt.forward(ex.patch.values.data(), nullptr);
  std::vector<Tensor> gw = zero_like_params(model);
  std::vector<Tensor> gb = zero_like_biases(model);
  rt.backward(ex.weight * (sigmoid(z) - ex.target), gw, gb);

  std::vector<Tensor> out;
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    if (!layer_has_params(model.arch.layers[i])) continue;
    out.push_back(std::move(gw[i]));
    out.push_back(std::move(gb[i]));
  }
  return out;
}

double weighted_cross_entropy(const std::vector<double>& probs,
                              const std::vector<double>& targets,
                              const std::vector<double>& weights) {
  if (probs.size() != targets.size() || probs.size() != weights.size())
    throw ShapeError("weighted_cross_entropy: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const double p = clamp_probability(probs[i]);
    num += weights[i] *
           -(targets[i] * std::log(p) + (1.0 - targets[i]) * std::log1p(-p));
    den += weights[i];
  }
  if (den == 0.0) throw DataError("weighted_cross_entropy: total weight is zero");
  return num / den;
}

SvdModel train(SvdModel model, const TrainingSource& data,
               const TrainHyper& hyper, std::ostream* log) {
  if (hyper.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (hyper.batch_size < 1) throw ConfigError("batch size must be positive");
  if (hyper.epochs == 0) return model;

  const std::size_t n = data.size();
  if (n == 0) throw DataError("training set is empty");

  // Pass 1: per-band normalization statistics over unmasked examples.
  const int bands = model.arch.input_bands;
  const int frames = model.arch.input_frames;
  std::vector<double> sum(bands, 0.0), sum_sq(bands, 0.0);
  std::size_t n_used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const TrainingExample ex = data.example(i);
    if (!(ex.weight > 0.0)) continue;
    check_patch_shape(model, ex.patch);
    ++n_used;
    for (int b = 0; b < bands; ++b) {
      const float* row = &ex.patch.values[static_cast<std::size_t>(b) * frames];
      double s = 0.0, s2 = 0.0;
      for (int j = 0; j < frames; ++j) {
        s += row[j];
        s2 += static_cast<double>(row[j]) * row[j];
      }
      sum[b] += s;
      sum_sq[b] += s2;
    }
  }
  if (n_used == 0) throw DataError("no training example has positive weight");
  const double cnt = static_cast<double>(n_used) * frames;
  for (int b = 0; b < bands; ++b) {
    const double mean = sum[b] / cnt;
    const double var = std::max(sum_sq[b] / cnt - mean * mean, 0.0);
    model.norm_mean[b] = mean;
    model.norm_std[b] = std::sqrt(var + 1e-8);
  }

  Runtime rt(model);
  std::vector<Tensor> gw = zero_like_params(model);
  std::vector<Tensor> gb = zero_like_biases(model);
  std::vector<Tensor> mw = zero_like_params(model), mb = zero_like_biases(model);
  std::vector<Tensor> uw = zero_like_params(model), ub = zero_like_biases(model);

  std::mt19937_64 gen(hyper.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  long step_count = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng::shuffle(order, gen);
    double epoch_loss_num = 0.0, epoch_weight = 0.0, epoch_acc_num = 0.0;

    for (std::size_t begin = 0; begin < n;
         begin += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(hyper.batch_size));

      // First the batch weight, so gradients are normalized consistently.
      double batch_weight = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const TrainingExample ex = data.example(order[k]);
        if (ex.weight > 0.0) batch_weight += ex.weight;
      }
      if (batch_weight == 0.0) continue;

      for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
        std::fill(gw[i].data.begin(), gw[i].data.end(), 0.0);
        std::fill(gb[i].data.begin(), gb[i].data.end(), 0.0);
      }

      double batch_loss_num = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const TrainingExample ex = data.example(order[k]);
        if (!(ex.weight > 0.0)) continue;
        check_patch_shape(model, ex.patch);
        const double z = rt.forward(ex.patch.values.data(), nullptr);
        const double p = sigmoid(z);
        batch_loss_num += ex.weight * cross_entropy_from_logit(z, ex.target);
        epoch_acc_num += ex.weight *
                         ((p >= 0.5) == (ex.target >= 0.5) ? 1.0 : 0.0);
        rt.backward(ex.weight * (p - ex.target) / batch_weight, gw, gb);
      }

      const double batch_loss = batch_loss_num / batch_weight;
      if (!std::isfinite(batch_loss))
        throw NumericsError(
            "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
            std::to_string(begin / hyper.batch_size));
      epoch_loss_num += batch_loss_num;
      epoch_weight += batch_weight;

      // ADAMAX update.
      ++step_count;
      const double lr =
          hyper.step / (1.0 - std::pow(hyper.beta1, static_cast<double>(step_count)));
      for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
        if (!layer_has_params(model.arch.layers[i])) continue;
        auto update = [&](Tensor& theta, Tensor& m, Tensor& u, const Tensor& g) {
          for (std::size_t j = 0; j < theta.data.size(); ++j) {
            m.data[j] = hyper.beta1 * m.data[j] + (1.0 - hyper.beta1) * g.data[j];
            u.data[j] = std::max(hyper.beta2 * u.data[j], std::abs(g.data[j]));
            theta.data[j] -= lr * m.data[j] / (u.data[j] + hyper.epsilon);
          }
        };
        update(model.weights[i], mw[i], uw[i], gw[i]);
        update(model.biases[i], mb[i], ub[i], gb[i]);
      }
    }

    if (log != nullptr) {
      (*log) << epoch << "\t"
             << detail::format_fixed(epoch_loss_num / epoch_weight, 6) << "\t"
             << detail::format_fixed(epoch_acc_num / epoch_weight, 6) << "\n";
    }
  }

  quantize_to_f32(model);
  return model;
}

std::vector<double> median_filter(const std::vector<double>& values,
                                  int width) {
  if (width < 1 || width % 2 == 0)
    throw ConfigError("median filter width must be odd and positive");
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  const std::int64_t r = width / 2;
  std::vector<double> out(values.size());
  std::vector<double> window;
  for (std::int64_t k = 0; k < n; ++k) {
    // Shrink symmetrically near the edges so the window stays odd.
    const std::int64_t rk = std::min({r, k, n - 1 - k});
    window.assign(values.begin() + (k - rk), values.begin() + (k + rk + 1));
    std::nth_element(window.begin(), window.begin() + rk, window.end());
    out[static_cast<std::size_t>(k)] = window[static_cast<std::size_t>(rk)];
  }
  return out;
}

PredictionSequence predict_sequence(const SvdModel& model,
                                    const MelSpectrogram& spec,
                                    int median_width) {
  if (model.arch.input_bands != kMelBands ||
      model.arch.input_frames != kPatchFrames)
    throw ShapeError("model input shape does not match mel patches");
  if (spec.n_frames == 0) throw ShapeError("empty spectrogram");

  Runtime rt(model);
  std::vector<double> raw(spec.n_frames);
  MelPatch patch;
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    patch = extract_patch(spec, f);
    raw[f] = clamp_probability(sigmoid(rt.forward(patch.values.data(), nullptr)));
  }
  PredictionSequence seq;
  seq.probs = median_filter(raw, median_width);
  seq.hop_seconds = spec.hop_seconds;
  return seq;
}

namespace {

constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

void put_tensor(std::string& out, const std::string& name,
                const std::vector<std::size_t>& shape,
                const std::vector<double>& data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t s : shape) put_u64(out, s);
  for (double v : data) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
  }
}

struct ByteReader {
  const char* p;
  std::size_t remaining;

  void need(std::size_t n) const {
    if (remaining < n) throw FormatError("truncated model file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    remaining -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    p += 8;
    remaining -= 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(p, n);
    p += n;
    remaining -= n;
    return s;
  }
};

}  // namespace

void save_model(const SvdModel& model, const std::filesystem::path& path) {
  const std::string descriptor = model.arch.to_json();
  std::string out;
  out += "SVDM";
  put_u32(out, kModelVersion);
  put_u64(out, model.config_hash());
  put_u32(out, static_cast<std::uint32_t>(descriptor.size()));
  out += descriptor;

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    if (!layer_has_params(model.arch.layers[i])) continue;
    tensors.emplace_back("layer" + std::to_string(i) + ".weight",
                         &model.weights[i]);
    tensors.emplace_back("layer" + std::to_string(i) + ".bias",
                         &model.biases[i]);
  }
  put_u32(out, static_cast<std::uint32_t>(tensors.size() + 2));
  for (const auto& [name, t] : tensors) put_tensor(out, name, t->shape, t->data);
  put_tensor(out, "norm.mean", {model.norm_mean.size()}, model.norm_mean);
  put_tensor(out, "norm.std", {model.norm_std.size()}, model.norm_std);

  detail::write_file(path, out);
}

SvdModel load_model(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  ByteReader r{bytes.data(), bytes.size()};
  if (r.bytes(4) != "SVDM") throw FormatError("not an SVDM model file");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw FormatError("unsupported model version " + std::to_string(version));
  const std::uint64_t stored_hash = r.u64();
  const std::uint32_t desc_len = r.u32();
  const std::string descriptor = r.bytes(desc_len);
  if (detail::fnv1a64(descriptor) != stored_hash)
    throw FormatError("model descriptor hash mismatch");

  SvdModel model;
  model.arch = ArchitectureConfig::from_json(descriptor);
  model.weights.resize(model.arch.layers.size());
  model.biases.resize(model.arch.layers.size());
  model.norm_mean.assign(model.arch.input_bands, 0.0);
  model.norm_std.assign(model.arch.input_bands, 1.0);

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<std::size_t>(r.u64());
      count *= shape[d];
    }
    std::vector<double> data(count);
    r.need(4 * count);
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, r.p + 4 * i, 4);
      data[i] = f;
    }
    r.p += 4 * count;
    r.remaining -= 4 * count;

    if (name == "norm.mean") {
      if (count != static_cast<std::size_t>(model.arch.input_bands))
        throw FormatError("norm.mean has wrong size");
      model.norm_mean = std::move(data);
    } else if (name == "norm.std") {
      if (count != static_cast<std::size_t>(model.arch.input_bands))
        throw FormatError("norm.std has wrong size");
      model.norm_std = std::move(data);
    } else if (name.starts_with("layer")) {
      const std::size_t dot = name.find('.');
      if (dot == std::string::npos) throw FormatError("bad tensor name " + name);
      std::size_t layer_idx = 0;
      const auto [ptr, ec] = std::from_chars(name.data() + 5,
                                             name.data() + dot, layer_idx);
      if (ec != std::errc() || ptr != name.data() + dot ||
          layer_idx >= model.arch.layers.size())
        throw FormatError("bad tensor name " + name);
      Tensor tensor{std::move(data), std::move(shape)};
      if (name.ends_with(".weight"))
        model.weights[layer_idx] = std::move(tensor);
      else if (name.ends_with(".bias"))
        model.biases[layer_idx] = std::move(tensor);
      else
        throw FormatError("bad tensor name " + name);
    } else {
      throw FormatError("unknown tensor " + name);
    }
  }

  // Validate that every parameterized layer got tensors of the right shape.
  SvdModel reference = init_model(model.arch, 0);
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    if (!layer_has_params(model.arch.layers[i])) continue;
    if (model.weights[i].shape != reference.weights[i].shape ||
        model.biases[i].shape != reference.biases[i].shape)
      throw FormatError("tensor shape mismatch in layer " + std::to_string(i));
  }
  return model;
}

}  // namespace voxalign
