// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/layers.hpp"

#include <cmath>

#include "hflab/error.hpp"

namespace hflab::nn {

Tensor ParameterList::add(std::string name, Tensor tensor) {
  if (find(name)) raise(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
  tensor.set_requires_grad(true);
  items_.push_back({std::move(name), tensor});
  return tensor;
}

std::size_t ParameterList::numel() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

const Parameter* ParameterList::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Tensor ParameterList::at(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) raise(ErrorCode::InvalidConfig, "unknown parameter " + name);
  return p->tensor;
}

void ParameterList::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

Linear::Linear(ParameterList& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
               bool bias) {
  w_ = params.add(prefix + ".w", uniform_init({in, out}, in, rng));
  if (bias) b_ = params.add(prefix + ".b", uniform_init({out}, in, rng));
}

LayerNorm::LayerNorm(ParameterList& params, const std::string& prefix, std::size_t dim) {
  gain_ = params.add(prefix + ".gain", Tensor({dim}, 1.0));
  bias_ = params.add(prefix + ".bias", Tensor({dim}, 0.0));
}

PRelu::PRelu(ParameterList& params, const std::string& prefix, double init_slope) {
  slope_ = params.add(prefix + ".slope", Tensor::scalar(init_slope));
}

Spiking::Spiking(ParameterList& params, const std::string& prefix, double temperature, double init_threshold)
    : temperature_(temperature) {
  if (!(temperature > 0.0)) raise(ErrorCode::InvalidConfig, "spiking temperature must be positive");
  threshold_ = params.add(prefix + ".threshold", Tensor::scalar(init_threshold));
}

MultiHeadAttention::MultiHeadAttention(ParameterList& params, const std::string& prefix, std::size_t d_model,
                                       std::size_t heads, std::size_t head_dim, Rng& rng)
    : heads_(heads) {
  if (heads == 0 || head_dim == 0) raise(ErrorCode::IndivisibleHeads, "attention needs at least one head");
  const std::size_t inner = heads * head_dim;
  q_ = Linear(params, prefix + ".q", d_model, inner, rng);
  k_ = Linear(params, prefix + ".k", d_model, inner, rng);
  v_ = Linear(params, prefix + ".v", d_model, inner, rng);
  o_ = Linear(params, prefix + ".o", inner, d_model, rng);
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& memory, const AttentionMask* mask) const {
  const Tensor& src = memory.defined() ? memory : x;
  const Tensor heads_out = scaled_dot_attention(q_(x), k_(src), v_(src), heads_, mask);
  return o_(heads_out);
}

}  // namespace hflab::nn
