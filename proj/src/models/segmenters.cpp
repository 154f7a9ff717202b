#include <algorithm>

#include "relict/core/error.hpp"
#include "relict/models/network.hpp"
#include "relict/nn/ops.hpp"

namespace relict::models {

using nn::Var;

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::unet: return "unet";
    case Architecture::fpn: return "fpn";
    case Architecture::linknet: return "linknet";
    case Architecture::classifier: return "classifier";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "unet") return Architecture::unet;
  if (s == "fpn") return Architecture::fpn;
  if (s == "linknet") return Architecture::linknet;
  if (s == "classifier") return Architecture::classifier;
  throw ConfigError("unknown architecture '" + s + "' (expected unet, fpn, linknet or classifier)");
}

ModelSpec ModelSpec::segmenter(Architecture arch, EncoderSpec encoder) {
  ModelSpec s;
  s.architecture = arch;
  s.encoder = std::move(encoder);
  s.output_classes = 1;
  return s;
}

ModelSpec ModelSpec::classifier(EncoderSpec encoder, int num_classes) {
  ModelSpec s;
  s.architecture = Architecture::classifier;
  s.encoder = std::move(encoder);
  s.output_classes = num_classes;
  return s;
}

void ModelSpec::validate() const {
  encoder.validate();
  if (architecture == Architecture::classifier) {
    if (output_classes < 2) throw Error("classifier needs at least 2 classes");
  } else if (output_classes != 1) {
    throw Error("segmenters emit exactly one probability channel");
  }
  if (!(input_scale > 0.0)) throw Error("input_scale must be positive");
}

std::string ModelSpec::fingerprint() const {
  return to_string(architecture) + "/" + encoder.fingerprint() + "/out=" + std::to_string(output_classes) +
         "/scale=" + std::to_string(input_scale);
}

nlohmann::json ModelSpec::to_json() const {
  return {{"architecture", to_string(architecture)},
          {"output_classes", output_classes},
          {"input_scale", input_scale},
          {"encoder",
           {{"growth_rate", encoder.growth_rate},
            {"block_layout", encoder.block_layout},
            {"input_channels", encoder.input_channels},
            {"stem_channels", encoder.stem_channels},
            {"stem_kernel", encoder.stem_kernel},
            {"bn_size", encoder.bn_size},
            {"compression", encoder.compression},
            {"width_scale", encoder.width_scale == WidthScale::tiny ? "tiny" : "full"}}}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  s.output_classes = j.at("output_classes").get<int>();
  s.input_scale = j.at("input_scale").get<double>();
  const auto& e = j.at("encoder");
  s.encoder.growth_rate = e.at("growth_rate").get<int>();
  s.encoder.block_layout = e.at("block_layout").get<std::vector<int>>();
  s.encoder.input_channels = e.at("input_channels").get<int>();
  s.encoder.stem_channels = e.at("stem_channels").get<int>();
  s.encoder.stem_kernel = e.at("stem_kernel").get<int>();
  s.encoder.bn_size = e.at("bn_size").get<int>();
  s.encoder.compression = e.at("compression").get<double>();
  s.encoder.width_scale = e.at("width_scale").get<std::string>() == "tiny" ? WidthScale::tiny : WidthScale::full;
  return s;
}

// ---- Network ------------------------------------------------------------

Network::Network(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), head_rng_(derive_seed(seed, 2)) {
  spec_.validate();
  Rng encoder_rng(derive_seed(seed, 1));
  encoder_ = std::make_unique<Encoder>(params_, encoder_rng, spec_.encoder);
}

Var Network::scaled_input(const nn::Tensor& raw) const {
  if (raw.shape().c != spec_.encoder.input_channels)
    throw Error("input has " + std::to_string(raw.shape().c) + " bands; model expects " +
                std::to_string(spec_.encoder.input_channels));
  if (raw.shape().h % 32 != 0 || raw.shape().w % 32 != 0)
    throw Error("input spatial size must be divisible by 32");
  nn::Tensor x = raw;
  for (double& v : x.values()) v *= spec_.input_scale;
  return nn::constant(std::move(x));
}

std::vector<Var> Network::encoder_features(const nn::Tensor& raw, bool training) {
  return encoder_->forward(scaled_input(raw), training);
}

Var Network::forward(const nn::Tensor& raw, bool training) {
  return head(encoder_features(raw, training), training);
}

nn::Tensor Network::predict(const nn::Tensor& raw) {
  nn::NoGradGuard guard;
  const Var logits = forward(raw, false);
  return spec_.architecture == Architecture::classifier ? nn::softmax(logits->value) : nn::sigmoid(logits->value);
}

namespace {

struct ConvBnRelu {
  Conv2d conv;
  BatchNorm2d norm;
  ConvBnRelu() = default;
  ConvBnRelu(ParameterSet& ps, Rng& rng, const std::string& name, int in, int out, int kernel)
      : conv(ps, rng, name + ".0", in, out, kernel), norm(ps, name + ".1", out) {}
  Var operator()(const Var& x, bool training) const { return nn::relu(norm(conv(x), training)); }
};

// Decoder channel widths per preset (deepest block first).
std::vector<int> unet_channels(const EncoderSpec& e) {
  return e.width_scale == WidthScale::tiny ? std::vector<int>{32, 16, 16, 8, 8}
                                           : std::vector<int>{256, 128, 64, 32, 16};
}

class UNet final : public Network {
 public:
  UNet(const ModelSpec& spec, std::uint64_t seed) : Network(spec, seed) {
    const auto enc = encoder_->channels();  // strides 2..32
    const auto dec = unet_channels(spec_.encoder);
    int in = enc[4];
    for (int i = 0; i < 5; ++i) {
      const int skip = i < 4 ? enc[3 - i] : 0;
      const std::string name = "decoder.blocks." + std::to_string(i);
      blocks_.push_back({ConvBnRelu(params_, head_rng_, name + ".conv1", in + skip, dec[i], 3),
                         ConvBnRelu(params_, head_rng_, name + ".conv2", dec[i], dec[i], 3)});
      in = dec[i];
    }
    head_ = Conv2d(params_, head_rng_, "head.conv", in, 1, 3, 1, true);
  }

 protected:
  Var head(const std::vector<Var>& f, bool training) override {
    Var x = f[4];
    for (int i = 0; i < 5; ++i) {
      x = nn::upsample_nearest(x, 2);
      if (i < 4) x = nn::concat_channels({x, f[3 - i]});
      x = blocks_[i].second(blocks_[i].first(x, training), training);
    }
    return head_(x);
  }

 private:
  std::vector<std::pair<ConvBnRelu, ConvBnRelu>> blocks_;
  Conv2d head_;
};

class Fpn final : public Network {
 public:
  Fpn(const ModelSpec& spec, std::uint64_t seed) : Network(spec, seed) {
    const auto enc = encoder_->channels();
    const bool tiny = spec_.encoder.width_scale == WidthScale::tiny;
    const int pyramid = tiny ? 16 : 256;
    const int seg = tiny ? 16 : 128;
    for (int level = 0; level < 4; ++level)  // p5, p4, p3, p2
      lateral_.push_back(Conv2d(params_, head_rng_, "decoder.lateral" + std::to_string(5 - level), enc[4 - level],
                                pyramid, 1, 1, true));
    for (int level = 0; level < 4; ++level) {
      const int ups = 3 - level;
      std::vector<ConvBnRelu> stages;
      const int n = std::max(ups, 1);
      for (int j = 0; j < n; ++j)
        stages.push_back(ConvBnRelu(params_, head_rng_,
                                    "decoder.seg" + std::to_string(5 - level) + "." + std::to_string(j),
                                    j == 0 ? pyramid : seg, seg, 3));
      seg_blocks_.push_back(std::move(stages));
    }
    head_ = Conv2d(params_, head_rng_, "head.conv", seg, 1, 3, 1, true);
  }

 protected:
  Var head(const std::vector<Var>& f, bool training) override {
    std::vector<Var> pyramid;
    Var p = lateral_[0](f[4]);
    pyramid.push_back(p);
    for (int level = 1; level < 4; ++level) {
      p = nn::add(nn::upsample_nearest(p, 2), lateral_[level](f[4 - level]));
      pyramid.push_back(p);
    }
    Var merged;
    for (int level = 0; level < 4; ++level) {
      const int ups = 3 - level;
      Var y = pyramid[level];
      for (std::size_t j = 0; j < seg_blocks_[level].size(); ++j) {
        y = seg_blocks_[level][j](y, training);
        if (ups > 0) y = nn::upsample_bilinear(y, 2);
      }
      merged = merged ? nn::add(merged, y) : y;
    }
    return nn::upsample_bilinear(head_(merged), 4);
  }

 private:
  std::vector<Conv2d> lateral_;
  std::vector<std::vector<ConvBnRelu>> seg_blocks_;
  Conv2d head_;
};

class LinkNet final : public Network {
 public:
  LinkNet(const ModelSpec& spec, std::uint64_t seed) : Network(spec, seed) {
    const auto enc = encoder_->channels();
    const int prefinal = spec_.encoder.width_scale == WidthScale::tiny ? 8 : 32;
    for (int i = 0; i < 5; ++i) {
      const int in = enc[4 - i];
      const int out = i < 4 ? enc[3 - i] : prefinal;
      const int mid = std::max(in / 4, 4);
      const std::string name = "decoder.blocks." + std::to_string(i);
      blocks_.push_back({ConvBnRelu(params_, head_rng_, name + ".reduce", in, mid, 1),
                         ConvBnRelu(params_, head_rng_, name + ".up", mid, mid, 3),
                         ConvBnRelu(params_, head_rng_, name + ".expand", mid, out, 1)});
    }
    head_ = Conv2d(params_, head_rng_, "head.conv", prefinal, 1, 1, 1, true);
  }

 protected:
  Var head(const std::vector<Var>& f, bool training) override {
    Var x = f[4];
    for (int i = 0; i < 5; ++i) {
      const auto& b = blocks_[i];
      Var y = b.reduce(x, training);
      y = b.up(nn::upsample_nearest(y, 2), training);
      y = b.expand(y, training);
      x = i < 4 ? nn::add(y, f[3 - i]) : y;
    }
    return head_(x);
  }

 private:
  struct Block {
    ConvBnRelu reduce, up, expand;
  };
  std::vector<Block> blocks_;
  Conv2d head_;
};

class Classifier final : public Network {
 public:
  Classifier(const ModelSpec& spec, std::uint64_t seed) : Network(spec, seed) {
    fc_ = Linear(params_, head_rng_, "classifier.fc", encoder_->channels().back(), spec_.output_classes);
  }

 protected:
  Var head(const std::vector<Var>& f, bool) override { return fc_(nn::global_avg_pool(f.back())); }

 private:
  Linear fc_;
};

}  // namespace

std::unique_ptr<Network> build_segmenter(const ModelSpec& spec, std::uint64_t seed) {
  switch (spec.architecture) {
    case Architecture::unet: return std::make_unique<UNet>(spec, seed);
    case Architecture::fpn: return std::make_unique<Fpn>(spec, seed);
    case Architecture::linknet: return std::make_unique<LinkNet>(spec, seed);
    case Architecture::classifier: break;
  }
  throw Error("build_segmenter: '" + to_string(spec.architecture) + "' is not a segmentation architecture");
}

std::unique_ptr<Network> build_classifier(const EncoderSpec& encoder, int num_classes, std::uint64_t seed,
                                          double input_scale) {
  if (num_classes < 2) throw Error("classifier needs at least 2 classes (got " + std::to_string(num_classes) + ")");
  ModelSpec spec = ModelSpec::classifier(encoder, num_classes);
  spec.input_scale = input_scale;
  return std::make_unique<Classifier>(spec, seed);
}

std::unique_ptr<Network> build_network(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.architecture == Architecture::classifier) {
    ModelSpec s = spec;
    return std::make_unique<Classifier>(s, seed);
  }
  return build_segmenter(spec, seed);
}

void transfer_encoder(const ParameterStore& source, Network& target) {
  target.parameters().load(source, "encoder.");
}

}  // namespace relict::models
