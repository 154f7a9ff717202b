#include "relict/models/parameters.hpp"

#include <cmath>

#include "relict/core/error.hpp"
#include "relict/core/hash.hpp"
#include "relict/nn/ops.hpp"

namespace relict::models {

namespace {

void hash_entry(Fnv1a& h, const std::string& name, const nn::Tensor& t) {
  h.update(name);
  const nn::Shape s = t.shape();
  const int dims[4] = {s.n, s.c, s.h, s.w};
  h.update(dims, sizeof(dims));
  h.update_values(t.values());
}

}  // namespace

std::uint64_t ParameterStore::checksum() const { return checksum(""); }

std::uint64_t ParameterStore::checksum(std::string_view prefix) const {
  Fnv1a h;
  for (const auto& [name, t] : tensors)
    if (name.starts_with(prefix)) hash_entry(h, name, t);
  return h.digest();
}

ParameterStore ParameterStore::subset(std::string_view prefix) const {
  ParameterStore out;
  for (const auto& [name, t] : tensors)
    if (name.starts_with(prefix)) out.tensors.emplace(name, t);
  return out;
}

void ParameterSet::check_unique(const std::string& name) const {
  if (buffers_.count(name)) throw Error("duplicate parameter key " + name);
  for (const auto& [n, v] : params_)
    if (n == name) throw Error("duplicate parameter key " + name);
}

nn::Var ParameterSet::add_parameter(const std::string& name, nn::Tensor init) {
  check_unique(name);
  auto var = nn::parameter(std::move(init));
  params_.emplace_back(name, var);
  return var;
}

nn::Tensor* ParameterSet::add_buffer(const std::string& name, nn::Tensor init) {
  check_unique(name);
  auto& slot = buffers_[name];
  slot = std::make_unique<nn::Tensor>(std::move(init));
  return slot.get();
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v->value.numel();
  return n;
}

ParameterStore ParameterSet::snapshot() const {
  ParameterStore s;
  for (const auto& [name, v] : params_) s.tensors.emplace(name, v->value);
  for (const auto& [name, t] : buffers_) s.tensors.emplace(name, *t);
  return s;
}

void ParameterSet::load(const ParameterStore& store, std::string_view prefix) {
  std::map<std::string, nn::Tensor*> targets;
  for (auto& [name, v] : params_)
    if (name.starts_with(prefix)) targets[name] = &v->value;
  for (auto& [name, t] : buffers_)
    if (name.starts_with(prefix)) targets[name] = t.get();

  // walk both key sets in order so the first offending key is reported
  auto src = store.tensors.lower_bound(std::string(prefix));
  auto dst = targets.begin();
  auto in_prefix = [&](const auto& it) { return it != store.tensors.end() && it->first.starts_with(prefix); };
  while (in_prefix(src) || dst != targets.end()) {
    if (!in_prefix(src)) throw Error("parameter " + dst->first + " missing from source store");
    if (dst == targets.end() || src->first < dst->first)
      throw Error("parameter " + src->first + " not present in target network");
    if (dst->first < src->first) throw Error("parameter " + dst->first + " missing from source store");
    if (src->second.shape() != dst->second->shape())
      throw Error("parameter " + src->first + " shape mismatch: source " + nn::to_string(src->second.shape()) +
                  " vs target " + nn::to_string(dst->second->shape()));
    ++src;
    ++dst;
  }
  for (auto& [name, t] : targets) *t = store.tensors.at(name);
}

void ParameterSet::zero_grad() {
  for (auto& [name, v] : params_) v->grad = nn::Tensor();
}

Conv2d::Conv2d(ParameterSet& ps, Rng& rng, const std::string& name, int in, int out, int kernel, int stride_,
               bool with_bias)
    : stride(stride_), pad(kernel / 2) {
  nn::Tensor w(nn::Shape{out, in, kernel, kernel});
  const double sigma = std::sqrt(2.0 / (in * kernel * kernel));
  for (double& v : w.values()) v = rng.normal(0.0, sigma);
  weight = ps.add_parameter(name + ".weight", std::move(w));
  if (with_bias) bias = ps.add_parameter(name + ".bias", nn::Tensor(nn::Shape{1, out, 1, 1}));
}

nn::Var Conv2d::operator()(const nn::Var& x) const { return nn::conv2d(x, weight, bias, stride, pad); }

BatchNorm2d::BatchNorm2d(ParameterSet& ps, const std::string& name, int channels) {
  const nn::Shape s{1, channels, 1, 1};
  gamma = ps.add_parameter(name + ".weight", nn::Tensor(s, 1.0));
  beta = ps.add_parameter(name + ".bias", nn::Tensor(s, 0.0));
  running_mean = ps.add_buffer(name + ".running_mean", nn::Tensor(s, 0.0));
  running_var = ps.add_buffer(name + ".running_var", nn::Tensor(s, 1.0));
}

nn::Var BatchNorm2d::operator()(const nn::Var& x, bool training) const {
  return nn::batch_norm(x, gamma, beta, *running_mean, *running_var, training);
}

Linear::Linear(ParameterSet& ps, Rng& rng, const std::string& name, int in, int out) {
  nn::Tensor w(nn::Shape{out, in, 1, 1});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  weight = ps.add_parameter(name + ".weight", std::move(w));
  bias = ps.add_parameter(name + ".bias", nn::Tensor(nn::Shape{1, out, 1, 1}));
}

nn::Var Linear::operator()(const nn::Var& x) const { return nn::conv2d(x, weight, bias, 1, 0); }

}  // namespace relict::models
