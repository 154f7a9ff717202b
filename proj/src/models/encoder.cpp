#include "relict/models/encoder.hpp"

#include <cmath>
#include <sstream>

#include "relict/core/error.hpp"
#include "relict/nn/ops.hpp"

namespace relict::models {

EncoderSpec EncoderSpec::full(int input_channels) {
  EncoderSpec s;
  s.input_channels = input_channels;
  return s;
}

EncoderSpec EncoderSpec::tiny(int input_channels) {
  EncoderSpec s;
  s.growth_rate = 8;
  s.block_layout = {2, 2, 2, 2};
  s.input_channels = input_channels;
  s.stem_channels = 16;
  s.stem_kernel = 3;
  s.bn_size = 2;
  s.width_scale = WidthScale::tiny;
  return s;
}

void EncoderSpec::validate() const {
  if (block_layout.empty()) throw Error("encoder block layout must not be empty");
  for (int d : block_layout)
    if (d < 1) throw Error("encoder dense blocks need at least one layer");
  if (growth_rate < 1 || input_channels < 1 || stem_channels < 1 || bn_size < 1 || stem_kernel < 1 ||
      stem_kernel % 2 == 0)
    throw Error("invalid encoder spec " + fingerprint());
  if (!(compression > 0.0 && compression <= 1.0)) throw Error("encoder compression must lie in (0, 1]");
}

std::vector<int> EncoderSpec::feature_channels() const {
  std::vector<int> out{stem_channels};
  int c = stem_channels;
  for (std::size_t b = 0; b < block_layout.size(); ++b) {
    c += block_layout[b] * growth_rate;
    out.push_back(c);
    if (b + 1 < block_layout.size()) c = static_cast<int>(std::floor(c * compression));
  }
  return out;
}

std::string EncoderSpec::fingerprint() const {
  std::ostringstream os;
  os << "densenet(growth=" << growth_rate << ",blocks=";
  for (std::size_t i = 0; i < block_layout.size(); ++i) os << (i ? "-" : "") << block_layout[i];
  os << ",in=" << input_channels << ",stem=" << stem_channels << "x" << stem_kernel << ",bn=" << bn_size
     << ",compression=" << compression << ")";
  return os.str();
}

Encoder::Encoder(ParameterSet& ps, Rng& rng, const EncoderSpec& spec) {
  spec.validate();
  const std::string root = "encoder.";
  conv0_ = Conv2d(ps, rng, root + "conv0", spec.input_channels, spec.stem_channels, spec.stem_kernel, 2);
  norm0_ = BatchNorm2d(ps, root + "norm0", spec.stem_channels);
  channels_.push_back(spec.stem_channels);
  int c = spec.stem_channels;
  const int bottleneck = spec.bn_size * spec.growth_rate;
  for (std::size_t b = 0; b < spec.block_layout.size(); ++b) {
    const std::string block = root + "denseblock" + std::to_string(b + 1) + ".";
    std::vector<DenseLayer> layers;
    for (int l = 0; l < spec.block_layout[b]; ++l) {
      const std::string layer = block + "denselayer" + std::to_string(l + 1) + ".";
      const int in = c + l * spec.growth_rate;
      layers.push_back({BatchNorm2d(ps, layer + "norm1", in), Conv2d(ps, rng, layer + "conv1", in, bottleneck, 1),
                        BatchNorm2d(ps, layer + "norm2", bottleneck),
                        Conv2d(ps, rng, layer + "conv2", bottleneck, spec.growth_rate, 3)});
    }
    blocks_.push_back(std::move(layers));
    c += spec.block_layout[b] * spec.growth_rate;
    channels_.push_back(c);
    if (b + 1 < spec.block_layout.size()) {
      const std::string tr = root + "transition" + std::to_string(b + 1) + ".";
      const int out = static_cast<int>(std::floor(c * spec.compression));
      transitions_.push_back({BatchNorm2d(ps, tr + "norm", c), Conv2d(ps, rng, tr + "conv", c, out, 1)});
      c = out;
    }
  }
  norm5_ = BatchNorm2d(ps, root + "norm5", c);
}

std::vector<nn::Var> Encoder::forward(const nn::Var& x, bool training) const {
  std::vector<nn::Var> features;
  nn::Var h = nn::relu(norm0_(conv0_(x), training));
  features.push_back(h);
  h = nn::max_pool2d(h, 3, 2, 1);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    std::vector<nn::Var> inputs{h};
    for (const auto& layer : blocks_[b]) {
      nn::Var joined = inputs.size() == 1 ? inputs.front() : nn::concat_channels(inputs);
      nn::Var y = layer.conv1(nn::relu(layer.norm1(joined, training)));
      y = layer.conv2(nn::relu(layer.norm2(y, training)));
      inputs.push_back(y);
    }
    h = nn::concat_channels(inputs);
    if (b < transitions_.size()) {
      const auto& tr = transitions_[b];
      nn::Var f = nn::relu(tr.norm(h, training));
      features.push_back(f);
      h = nn::avg_pool2d(tr.conv(f), 2);
    } else {
      features.push_back(nn::relu(norm5_(h, training)));
    }
  }
  return features;
}

}  // namespace relict::models
