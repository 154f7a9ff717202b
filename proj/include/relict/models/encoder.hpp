#pragma once

#include <string>
#include <vector>

#include "relict/models/parameters.hpp"

namespace relict::models {

enum class WidthScale { full, tiny };

/// DenseNet-style encoder configuration.
struct EncoderSpec {
  int growth_rate = 32;
  std::vector<int> block_layout{6, 12, 24, 16};
  int input_channels = 4;
  int stem_channels = 64;
  int stem_kernel = 7;
  int bn_size = 4;  ///< bottleneck width = bn_size * growth_rate
  double compression = 0.5;
  WidthScale width_scale = WidthScale::full;

  /// Canonical 121-layer layout.
  static EncoderSpec full(int input_channels = 4);
  /// Desk-scale preset: layout (2,2,2,2), growth 8.
  static EncoderSpec tiny(int input_channels = 4);

  int stage_count() const { return static_cast<int>(block_layout.size()); }
  /// Channels of the five feature maps (strides 2, 4, 8, 16, 32).
  std::vector<int> feature_channels() const;
  std::string fingerprint() const;
  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

/// Stem (conv, norm, relu) -> max-pool -> dense blocks joined by transitions
/// -> final norm. Emits one feature map per stage: the stem activation and,
/// for every block, the normalized activation that feeds its transition (or
/// the final norm for the last block).
class Encoder {
 public:
  Encoder(ParameterSet& ps, Rng& rng, const EncoderSpec& spec);

  std::vector<nn::Var> forward(const nn::Var& x, bool training) const;
  const std::vector<int>& channels() const { return channels_; }

 private:
  struct DenseLayer {
    BatchNorm2d norm1;
    Conv2d conv1;
    BatchNorm2d norm2;
    Conv2d conv2;
  };
  struct Transition {
    BatchNorm2d norm;
    Conv2d conv;
  };

  Conv2d conv0_;
  BatchNorm2d norm0_;
  std::vector<std::vector<DenseLayer>> blocks_;
  std::vector<Transition> transitions_;
  BatchNorm2d norm5_;
  std::vector<int> channels_;
};

}  // namespace relict::models
