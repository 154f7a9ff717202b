#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "relict/nn/ops.hpp"
#include "support.hpp"

using namespace relict;
using namespace relict::nn;
using relict::testing::check_gradients;
using relict::testing::max_rel_error;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Direct 7-loop convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor y(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b ? b->data()[o] : 0.0;
          for (int c = 0; c < xs.c; ++c)
            for (int ki = 0; ki < ws.h; ++ki)
              for (int kj = 0; kj < ws.w; ++kj) {
                const int yi = i * stride - pad + ki, xj = j * stride - pad + kj;
                if (yi < 0 || xj < 0 || yi >= xs.h || xj >= xs.w) continue;
                acc += x.at(n, c, yi, xj) * w.at(o, c, ki, kj);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(tol));
}

Var sum_weighted(const Var& y, const Tensor& weights) {
  // Scalar loss sum(y * weights) via BCE-free plumbing: y scaled by fixed weights.
  auto out = make_result(Tensor(Shape{1, 1, 1, 1}), {y}, [weights](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] += self.grad.data()[0] * weights.data()[i];
  });
  double s = 0.0;
  for (std::size_t i = 0; i < weights.numel(); ++i) s += y->value.data()[i] * weights.data()[i];
  out->value.data()[0] = s;
  return out;
}

}  // namespace

TEST_CASE("conv2d forward equals the direct loop") {
  Rng rng(1);
  for (auto [k, stride, pad] : {std::tuple{1, 1, 0}, {3, 1, 1}, {3, 2, 1}, {7, 2, 3}, {2, 2, 0}}) {
    const Tensor x = random_tensor(Shape{2, 3, 9, 10}, rng);
    const Tensor w = random_tensor(Shape{4, 3, k, k}, rng);
    const Tensor b = random_tensor(Shape{1, 4, 1, 1}, rng);
    NoGradGuard g;
    const Var y = conv2d(constant(x), constant(w), constant(b), stride, pad);
    check_close(y->value, naive_conv(x, w, &b, stride, pad), 1e-12);
  }
}

TEST_CASE("gradients of single ops match finite differences") {
  Rng rng(2);
  const Tensor x0 = random_tensor(Shape{2, 3, 6, 6}, rng);

  SUBCASE("conv2d strided with bias") {
    Var x = parameter(x0), w = parameter(random_tensor(Shape{4, 3, 3, 3}, rng)),
        b = parameter(random_tensor(Shape{1, 4, 1, 1}, rng));
    const Tensor wt = random_tensor(Shape{2, 4, 3, 3}, rng);
    auto loss = [&] { return sum_weighted(conv2d(x, w, b, 2, 1), wt); };
    CHECK(max_rel_error(check_gradients({{"x", x}, {"w", w}, {"b", b}}, loss, 40, 3)) < 1e-6);
  }
  SUBCASE("batch norm in training mode") {
    Var x = parameter(x0), g = parameter(random_tensor(Shape{1, 3, 1, 1}, rng)),
        be = parameter(random_tensor(Shape{1, 3, 1, 1}, rng));
    Tensor rm(Shape{1, 3, 1, 1}), rv(Shape{1, 3, 1, 1}, 1.0);
    const Tensor wt = random_tensor(x0.shape(), rng);
    auto loss = [&] { return sum_weighted(batch_norm(x, g, be, rm, rv, true), wt); };
    CHECK(max_rel_error(check_gradients({{"x", x}, {"g", g}, {"b", be}}, loss, 40, 4)) < 1e-5);
  }
  SUBCASE("pooling and upsampling") {
    Var x = parameter(x0);
    const Tensor w1 = random_tensor(Shape{2, 3, 3, 3}, rng);
    const Tensor w2 = random_tensor(Shape{2, 3, 3, 3}, rng);
    const Tensor w3 = random_tensor(Shape{2, 3, 12, 12}, rng);
    const Tensor w4 = random_tensor(Shape{2, 3, 12, 12}, rng);
    const Tensor w5 = random_tensor(Shape{2, 3, 1, 1}, rng);
    auto loss = [&] {
      Var a = sum_weighted(max_pool2d(x, 3, 2, 1), w1);
      Var b = sum_weighted(avg_pool2d(x, 2), w2);
      Var c = sum_weighted(upsample_nearest(x, 2), w3);
      Var d = sum_weighted(upsample_bilinear(x, 2), w4);
      Var e = sum_weighted(global_avg_pool(x), w5);
      return add(add(add(a, b), add(c, d)), e);
    };
    CHECK(max_rel_error(check_gradients({{"x", x}}, loss, 60, 5)) < 1e-6);
  }
  SUBCASE("relu, sigmoid, concat and losses") {
    Var x = parameter(x0), y = parameter(random_tensor(Shape{2, 2, 6, 6}, rng));
    Tensor targets(Shape{2, 5, 6, 6}), weights(Shape{2, 5, 6, 6});
    for (std::size_t i = 0; i < targets.numel(); ++i) {
      targets.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
      weights.data()[i] = rng.uniform() < 0.8 ? 1.0 : 0.0;
    }
    const Tensor w1 = random_tensor(Shape{2, 3, 6, 6}, rng);
    auto loss = [&] {
      Var cat = concat_channels({relu(x), sigmoid(y)});
      return add(bce_with_logits(cat, targets, weights), sum_weighted(relu(x), w1));
    };
    CHECK(max_rel_error(check_gradients({{"x", x}, {"y", y}}, loss, 60, 6)) < 1e-5);
  }
  SUBCASE("softmax cross-entropy") {
    Var z = parameter(random_tensor(Shape{5, 4, 1, 1}, rng));
    const std::vector<int> labels{0, 3, 1, 1, 2};
    auto loss = [&] { return softmax_cross_entropy(z, labels); };
    CHECK(max_rel_error(check_gradients({{"z", z}}, loss, 20, 7)) < 1e-6);
  }
}

TEST_CASE("batch norm normalizes and tracks running statistics") {
  Rng rng(4);
  Tensor x = random_tensor(Shape{4, 2, 3, 3}, rng, 3.0);
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] += 5.0;
  Tensor rm(Shape{1, 2, 1, 1}), rv(Shape{1, 2, 1, 1}, 1.0);
  NoGradGuard g;
  const Var y = batch_norm(constant(x), constant(Tensor(Shape{1, 2, 1, 1}, 1.0)), constant(Tensor(Shape{1, 2, 1, 1})),
                           rm, rv, true);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, var = 0, xm = 0, xv = 0;
    const int m = 4 * 9;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) {
        mean += y->value.at(n, c, i / 3, i % 3);
        xm += x.at(n, c, i / 3, i % 3);
      }
    mean /= m;
    xm /= m;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) {
        var += std::pow(y->value.at(n, c, i / 3, i % 3) - mean, 2);
        xv += std::pow(x.at(n, c, i / 3, i % 3) - xm, 2);
      }
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9).scale(1));
    CHECK(var / m == doctest::Approx(1.0).epsilon(1e-4));
    // momentum 0.1, unbiased variance
    CHECK(rm.data()[c] == doctest::Approx(0.1 * xm));
    CHECK(rv.data()[c] == doctest::Approx(0.9 + 0.1 * xv / (m - 1)));
  }
  const Var e = batch_norm(constant(x), constant(Tensor(Shape{1, 2, 1, 1}, 1.0)), constant(Tensor(Shape{1, 2, 1, 1})),
                           rm, rv, false);
  CHECK(e->value.at(0, 1, 0, 0) == doctest::Approx((x.at(0, 1, 0, 0) - rm.data()[1]) / std::sqrt(rv.data()[1] + 1e-5)));
}

TEST_CASE("bilinear upsampling uses half-pixel centers") {
  Tensor x(Shape{1, 1, 1, 2}, std::vector<double>{0.0, 4.0});
  NoGradGuard g;
  const Var y = upsample_bilinear(constant(x), 2);
  // Output centers map to source coordinates -0.25, 0.25, 0.75, 1.25 (clamped).
  CHECK(y->value.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(y->value.at(0, 0, 0, 1) == doctest::Approx(1.0));
  CHECK(y->value.at(0, 0, 0, 2) == doctest::Approx(3.0));
  CHECK(y->value.at(0, 0, 0, 3) == doctest::Approx(4.0));
}

TEST_CASE("losses match their closed forms") {
  Tensor z(Shape{1, 1, 1, 3}, std::vector<double>{-2.0, 0.0, 3.0});
  Tensor t(Shape{1, 1, 1, 3}, std::vector<double>{0.0, 1.0, 1.0});
  NoGradGuard g;
  auto bce = [](double z, double t) {
    const double p = 1.0 / (1.0 + std::exp(-z));
    return -(t * std::log(p) + (1 - t) * std::log(1 - p));
  };
  CHECK(bce_with_logits(constant(z), t)->value.data()[0] ==
        doctest::Approx((bce(-2, 0) + bce(0, 1) + bce(3, 1)) / 3));
  Tensor w(Shape{1, 1, 1, 3}, std::vector<double>{1.0, 0.0, 1.0});
  CHECK(bce_with_logits(constant(z), t, w)->value.data()[0] == doctest::Approx((bce(-2, 0) + bce(3, 1)) / 2));

  Tensor logits(Shape{1, 3, 1, 1}, std::vector<double>{1.0, 2.0, 3.0});
  const std::vector<int> label{2};
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  CHECK(softmax_cross_entropy(constant(logits), label)->value.data()[0] == doctest::Approx(lse - 3.0));
  const Tensor p = softmax(logits);
  CHECK(p.data()[0] + p.data()[1] + p.data()[2] == doctest::Approx(1.0));
}

TEST_CASE("no-grad mode records no graph") {
  Var w = parameter(Tensor(Shape{1, 1, 1, 1}, 2.0));
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    const Var y = relu(w);
    CHECK(y->inputs.empty());
  }
  CHECK(grad_enabled());
  CHECK_FALSE(relu(w)->inputs.empty());
}
