#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relict/core/rng.hpp"
#include "relict/nn/autograd.hpp"

namespace relict::models {

/// Named snapshot of every trainable parameter and normalization buffer,
/// keyed by dotted module path (e.g. "encoder.denseblock1.denselayer1.conv1.weight").
struct ParameterStore {
  std::map<std::string, nn::Tensor> tensors;

  /// FNV-1a over names, shapes and raw values, in key order.
  std::uint64_t checksum() const;
  /// Same, restricted to keys starting with `prefix`.
  std::uint64_t checksum(std::string_view prefix) const;
  ParameterStore subset(std::string_view prefix) const;
  bool operator==(const ParameterStore&) const = default;
};

/// Owns a network's parameters (autograd leaves) and running-stat buffers.
class ParameterSet {
 public:
  nn::Var add_parameter(const std::string& name, nn::Tensor init);
  nn::Tensor* add_buffer(const std::string& name, nn::Tensor init);

  const std::vector<std::pair<std::string, nn::Var>>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  ParameterStore snapshot() const;
  /// Copies every store entry whose key starts with `prefix` into the
  /// matching parameter/buffer. Throws naming the first key that is missing
  /// on either side or whose shape differs.
  void load(const ParameterStore& store, std::string_view prefix = "");
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;

  std::vector<std::pair<std::string, nn::Var>> params_;
  std::map<std::string, std::unique_ptr<nn::Tensor>> buffers_;
};

/// Convolution with He-normal weights and optional zero bias.
struct Conv2d {
  nn::Var weight;
  nn::Var bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet& ps, Rng& rng, const std::string& name, int in, int out, int kernel, int stride = 1,
         bool with_bias = false);
  nn::Var operator()(const nn::Var& x) const;
};

struct BatchNorm2d {
  nn::Var gamma;
  nn::Var beta;
  nn::Tensor* running_mean = nullptr;
  nn::Tensor* running_var = nullptr;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet& ps, const std::string& name, int channels);
  nn::Var operator()(const nn::Var& x, bool training) const;
};

/// Fully connected layer on [N, in, 1, 1] inputs, uniform(+-1/sqrt(in)) init.
struct Linear {
  nn::Var weight;
  nn::Var bias;

  Linear() = default;
  Linear(ParameterSet& ps, Rng& rng, const std::string& name, int in, int out);
  nn::Var operator()(const nn::Var& x) const;
};

}  // namespace relict::models
