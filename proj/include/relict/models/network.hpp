#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "relict/models/encoder.hpp"

namespace relict::models {

enum class Architecture { unet, fpn, linknet, classifier };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelSpec {
  Architecture architecture = Architecture::unet;
  EncoderSpec encoder = EncoderSpec::tiny();
  int output_classes = 1;  ///< 1 for segmenters, k for the classifier
  /// Multiplier applied to raw pixel values before the encoder.
  double input_scale = 1.0 / 1024.0;

  static ModelSpec segmenter(Architecture arch, EncoderSpec encoder);
  static ModelSpec classifier(EncoderSpec encoder, int num_classes);

  std::string fingerprint() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  bool operator==(const ModelSpec&) const = default;
};

/// Encoder plus architecture-specific head. Parameters live under
/// "encoder.", "decoder." and "head." (segmenters) or "classifier."
/// (classifier).
class Network {
 public:
  virtual ~Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterStore snapshot() const { return params_.snapshot(); }

  /// Logits: [N,1,H,W] for segmenters, [N,K,1,1] for the classifier.
  /// `raw` is band-major pixel data in input units.
  nn::Var forward(const nn::Tensor& raw, bool training);
  /// Inference-mode probabilities without recording a graph (sigmoid for
  /// segmenters, softmax for the classifier).
  nn::Tensor predict(const nn::Tensor& raw);
  /// The encoder's five feature maps.
  std::vector<nn::Var> encoder_features(const nn::Tensor& raw, bool training);

 protected:
  Network(ModelSpec spec, std::uint64_t seed);
  virtual nn::Var head(const std::vector<nn::Var>& features, bool training) = 0;

  ModelSpec spec_;
  std::uint64_t seed_;
  ParameterSet params_;
  std::unique_ptr<Encoder> encoder_;
  Rng head_rng_;

 private:
  nn::Var scaled_input(const nn::Tensor& raw) const;
};

/// U-Net, FPN or LinkNet over the ModelSpec's encoder, single sigmoid channel.
std::unique_ptr<Network> build_segmenter(const ModelSpec& spec, std::uint64_t seed);
/// Global pooling over the deepest feature map plus a linear layer.
std::unique_ptr<Network> build_classifier(const EncoderSpec& encoder, int num_classes, std::uint64_t seed,
                                          double input_scale = 1.0 / 1024.0);
std::unique_ptr<Network> build_network(const ModelSpec& spec, std::uint64_t seed);

/// Copies every "encoder." entry of `source` into `target`; decoder/head
/// parameters are left as initialized. Throws naming the first key whose
/// presence or shape differs.
void transfer_encoder(const ParameterStore& source, Network& target);

}  // namespace relict::models
