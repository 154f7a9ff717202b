#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "relict/nn/tensor.hpp"

namespace relict::nn {

/// A value in the computation graph. Leaves with `requires_grad` are
/// trainable parameters; interior nodes record a backward closure that
/// scatters `grad` into their inputs.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value);

/// Whether ops currently record the graph. Off inside `NoGradGuard`.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Records `inputs`/`backward` only when gradients are
/// enabled and at least one input requires them.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Reverse-mode sweep from a scalar `root` (seeded with d(root)=1).
void backward(const Var& root);

}  // namespace relict::nn
