#pragma once

#include <span>
#include <vector>

#include "relict/nn/autograd.hpp"

namespace relict::nn {

/// 2-D cross-correlation. `weight` is [out, in, kh, kw]; `bias` may be null
/// and is [1, out, 1, 1] otherwise.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

/// Batch normalization over (N, H, W) per channel. In training mode the batch
/// statistics normalize and the running estimates are updated in place
/// (`running = (1 - momentum) * running + momentum * batch`, unbiased
/// variance); otherwise the running estimates normalize.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var concat_channels(const std::vector<Var>& xs);

Var max_pool2d(const Var& x, int kernel, int stride, int pad);
/// Non-overlapping average pooling (stride = kernel).
Var avg_pool2d(const Var& x, int kernel);
Var global_avg_pool(const Var& x);

Var upsample_nearest(const Var& x, int factor);
/// Bilinear resize by an integer factor, half-pixel centers.
Var upsample_bilinear(const Var& x, int factor);

/// Weighted mean of per-element binary cross-entropy computed from logits.
/// `weights` may be empty (all ones). Returns a scalar.
Var bce_with_logits(const Var& logits, const Tensor& targets, const Tensor& weights = {});

/// Mean categorical cross-entropy; `logits` is [N, K, 1, 1].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

/// Row-wise softmax of [N, K, 1, 1] logits.
Tensor softmax(const Tensor& logits);
Tensor sigmoid(const Tensor& x);

}  // namespace relict::nn
