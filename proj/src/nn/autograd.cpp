#include "relict/nn/autograd.hpp"

#include <unordered_set>

#include "relict/core/error.hpp"

namespace relict::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return node;
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (!any) return node;
  node->requires_grad = true;
  node->inputs = std::move(inputs);
  node->backward_fn = std::move(backward);
  return node;
}

void backward(const Var& root) {
  if (root->value.numel() != 1) throw Error("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // iterative post-order DFS -> reverse topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().data()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.numel() == node->value.numel()) node->backward_fn(*node);
  }
  // release interior buffers so the graph can be dropped cheaply
  for (Node* node : order) {
    if (node->backward_fn) node->grad = Tensor();
  }
}

}  // namespace relict::nn
