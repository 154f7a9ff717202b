#include <doctest.h>

#include <fstream>

#include "relict/core/error.hpp"
#include "relict/models/checkpoint.hpp"
#include "relict/nn/ops.hpp"
#include "support.hpp"

using namespace relict;
using namespace relict::models;

namespace {

nn::Tensor probe(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor t({n, 4, size, size});
  for (double& v : t.values()) v = std::floor(rng.uniform() * 1000.0);
  return t;
}

const Architecture kSegmenters[] = {Architecture::unet, Architecture::fpn, Architecture::linknet};

}  // namespace

TEST_CASE("full encoder preset matches the 121-layer parameter count") {
  // 6,953,856 for three input bands; a fourth band adds 64 * 7 * 7 stem weights.
  ParameterSet ps;
  Rng rng(1);
  Encoder enc(ps, rng, EncoderSpec::full(4));
  CHECK(ps.parameter_count() == 6953856 + 64 * 49);
  CHECK(enc.channels() == std::vector<int>{64, 256, 512, 1024, 1024});
}

TEST_CASE("tiny encoder emits five feature maps at strides 2..32") {
  auto net = build_segmenter(ModelSpec::segmenter(Architecture::unet, EncoderSpec::tiny()), 3);
  nn::NoGradGuard g;
  const auto feats = net->encoder_features(probe(2, 64, 1), false);
  REQUIRE(feats.size() == 5);
  const auto ch = EncoderSpec::tiny().feature_channels();
  for (int i = 0; i < 5; ++i) {
    CHECK(feats[i]->value.shape().c == ch[i]);
    CHECK(feats[i]->value.shape().h == 64 >> (i + 1));
    CHECK(feats[i]->value.shape().n == 2);
  }
}

TEST_CASE("segmenters produce one logit per pixel") {
  for (auto arch : kSegmenters) {
    CAPTURE(to_string(arch));
    auto net = build_segmenter(ModelSpec::segmenter(arch, EncoderSpec::tiny()), 5);
    for (int size : {32, 64}) {
      const auto out = net->predict(probe(3, size, 2));
      CHECK(out.shape() == nn::Shape{3, 1, size, size});
      for (double p : out.values()) CHECK((p >= 0.0 && p <= 1.0));
    }
    bool has_encoder = false, has_head = false;
    for (const auto& [name, v] : net->parameters().parameters()) {
      has_encoder = has_encoder || name.rfind("encoder.", 0) == 0;
      has_head = has_head || name.rfind("head.", 0) == 0;
    }
    CHECK(has_encoder);
    CHECK(has_head);
  }
  CHECK_THROWS_AS(ModelSpec::segmenter(Architecture::classifier, EncoderSpec::tiny()).validate(), Error);
}

TEST_CASE("classifier softmax rows sum to one") {
  auto net = build_classifier(EncoderSpec::tiny(), 6, 9);
  const auto p = net->predict(probe(4, 32, 3));
  REQUIRE(p.shape() == nn::Shape{4, 6, 1, 1});
  for (int n = 0; n < 4; ++n) {
    double s = 0.0;
    for (int c = 0; c < 6; ++c) s += p.at(n, c, 0, 0);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(build_classifier(EncoderSpec::tiny(), 1, 9), Error);
}

TEST_CASE("initialization is a pure function of the seed") {
  const auto spec = ModelSpec::segmenter(Architecture::fpn, EncoderSpec::tiny());
  CHECK(build_network(spec, 4)->snapshot() == build_network(spec, 4)->snapshot());
  CHECK(build_network(spec, 4)->snapshot().checksum() != build_network(spec, 5)->snapshot().checksum());
  // classifier and segmenter built from the same seed share the encoder init
  auto cls = build_classifier(EncoderSpec::tiny(), 4, 4);
  CHECK(cls->snapshot().checksum("encoder.") == build_network(spec, 4)->snapshot().checksum("encoder."));
}

TEST_CASE("transfer_encoder copies the encoder bit-exactly and nothing else") {
  auto source = build_classifier(EncoderSpec::tiny(), 4, 100);
  // move the source away from its init so the copy is observable
  for (auto& [name, v] : source->parameters().parameters())
    for (double& x : v->value.values()) x += 0.01;
  const auto src = source->snapshot();
  for (auto arch : kSegmenters) {
    CAPTURE(to_string(arch));
    auto target = build_segmenter(ModelSpec::segmenter(arch, EncoderSpec::tiny()), 200);
    const auto before = target->snapshot();
    transfer_encoder(src, *target);
    const auto after = target->snapshot();
    for (const auto& [key, t] : after.tensors) {
      if (key.rfind("encoder.", 0) == 0)
        CHECK(t == src.tensors.at(key));
      else
        CHECK(t == before.tensors.at(key));
    }
    nn::NoGradGuard g;
    const auto x = probe(2, 32, 77);
    const auto fa = source->encoder_features(x, false);
    const auto fb = target->encoder_features(x, false);
    for (int i = 0; i < 5; ++i) CHECK(fa[i]->value == fb[i]->value);
  }
  SUBCASE("mismatched encoder specs are rejected") {
    auto other = EncoderSpec::tiny();
    other.growth_rate = 12;
    auto target = build_segmenter(ModelSpec::segmenter(Architecture::unet, other), 1);
    CHECK_THROWS_AS(transfer_encoder(src, *target), Error);
    auto five_band = build_segmenter(ModelSpec::segmenter(Architecture::unet, EncoderSpec::tiny(5)), 1);
    CHECK_THROWS_AS(transfer_encoder(src, *five_band), Error);
  }
}

TEST_CASE("checkpoints round trip and detect corruption") {
  testing::TempDir dir("ckpt");
  auto net = build_segmenter(ModelSpec::segmenter(Architecture::linknet, EncoderSpec::tiny()), 8);
  const auto ck = make_checkpoint(*net, {{"stage", "unit"}});
  save_checkpoint(ck, dir / "a.ckpt");
  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.spec == ck.spec);
  CHECK(back.seed == 8);
  CHECK(back.store == ck.store);
  CHECK(back.provenance["stage"] == "unit");
  auto rebuilt = instantiate(back, &ck.spec);
  const auto x = probe(1, 32, 5);
  CHECK(rebuilt->predict(x) == net->predict(x));

  save_checkpoint(back, dir / "b.ckpt");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) == std::string(std::istreambuf_iterator<char>(fb), {}));

  const auto wrong = ModelSpec::segmenter(Architecture::unet, EncoderSpec::tiny());
  CHECK_THROWS_AS(instantiate(back, &wrong), Error);

  {
    std::fstream f(dir / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::streamoff>(f.tellg());
    f.seekp(size - 3);
    f.put('\x5a');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST_CASE("segmenter gradients match finite differences") {
  for (auto arch : kSegmenters) {
    CAPTURE(to_string(arch));
    auto net = build_segmenter(ModelSpec::segmenter(arch, EncoderSpec::tiny()), 31);
    const auto x = probe(2, 32, 6);
    nn::Tensor target({2, 1, 32, 32});
    for (int y = 8; y < 20; ++y)
      for (int c = 10; c < 22; ++c) target.at(0, 0, y, c) = 1.0;
    const auto samples = testing::check_gradients(
        net->parameters().parameters(), [&] { return nn::bce_with_logits(net->forward(x, true), target); }, 8, 3);
    CHECK(testing::max_rel_error(samples) < 1e-3);
  }
}
