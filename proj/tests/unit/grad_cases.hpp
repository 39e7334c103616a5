// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hflab/models.hpp"
#include "hflab/nn/gradcheck.hpp"
#include "hflab/nn/layers.hpp"
#include "hflab/nn/loss.hpp"
#include "hflab/nn/ops.hpp"

namespace hflab::testing {

struct GradCase {
  std::string name;
  std::function<nn::Tensor()> f;
  std::vector<nn::Tensor> inputs;
};

namespace detail {

inline nn::Tensor rand_tensor(nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                              bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return nn::Tensor(std::move(shape), std::move(v), grad);
}

// Entries bounded away from zero by `gap` (for kinks at 0).
inline nn::Tensor rand_away(nn::Shape shape, std::mt19937_64& rng, double gap) {
  auto t = rand_tensor(std::move(shape), rng);
  for (auto& x : t.mutable_values()) x = std::copysign(gap + std::abs(x), x);
  return t;
}

// Weighted sum so every output coordinate carries a distinct gradient.
inline nn::Tensor project(const nn::Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(y, rand_tensor(y.shape(), rng, -1.0, 1.0, false)));
}

inline std::vector<nn::Tensor> with_params(std::vector<nn::Tensor> inputs, const nn::ParameterList& params) {
  for (const auto& p : params.items()) inputs.push_back(p.tensor);
  return inputs;
}

}  // namespace detail

/// One case per differentiable building block plus two small end-to-end models.
inline std::vector<GradCase> gradient_cases() {
  using namespace nn;
  using detail::project;
  using detail::rand_away;
  using detail::rand_tensor;
  std::mt19937_64 rng(20240);
  std::vector<GradCase> cases;

  {
    auto x = rand_tensor({3, 4}, rng), w = rand_tensor({4, 5}, rng), b = rand_tensor({5}, rng);
    cases.push_back({"linear", [=] { return project(linear(x, w, b), 1); }, {x, w, b}});
  }
  {
    auto x = rand_tensor({2, 3, 4}, rng), w = rand_tensor({4, 2}, rng);
    cases.push_back({"batched_matmul", [=] { return project(matmul(x, w), 2); }, {x, w}});
  }
  {
    auto x = rand_away({4, 5}, rng, 0.05);
    auto a = Tensor({1}, {0.25}, true);
    cases.push_back({"prelu", [=] { return project(prelu(x, a), 3); }, {x, a}});
  }
  {
    auto x = rand_tensor({4, 5}, rng, -3.0, 3.0);
    cases.push_back({"sigmoid", [=] { return project(sigmoid(x), 4); }, {x}});
    auto y = rand_tensor({4, 5}, rng, -3.0, 3.0);
    cases.push_back({"tanh", [=] { return project(nn::tanh(y), 5); }, {y}});
  }
  {
    auto x = rand_tensor({3, 6}, rng, -2.0, 2.0);
    cases.push_back({"softmax", [=] { return project(softmax(x), 6); }, {x}});
  }
  {
    auto x = rand_tensor({3, 7}, rng), g = rand_tensor({7}, rng, 0.5, 1.5), b = rand_tensor({7}, rng);
    cases.push_back({"layer_norm", [=] { return project(layer_norm(x, g, b), 7); }, {x, g, b}});
    auto s = rand_tensor({3, 7}, rng);
    cases.push_back({"add_norm", [=] { return project(add_norm(x, s, g, b), 8); }, {x, s, g, b}});
  }
  {
    auto q = rand_tensor({4, 6}, rng), k = rand_tensor({5, 6}, rng), v = rand_tensor({5, 4}, rng);
    cases.push_back({"attention", [=] { return project(scaled_dot_attention(q, k, v, 2), 9); }, {q, k, v}});
  }
  {
    auto q = rand_tensor({2, 5, 6}, rng), k = rand_tensor({2, 5, 6}, rng), v = rand_tensor({2, 5, 6}, rng);
    auto mask = std::make_shared<AttentionMask>(AttentionMask::causal(5));
    cases.push_back({"attention_causal_mask",
                     [=] { return project(scaled_dot_attention(q, k, v, 3, mask.get()), 10); },
                     {q, k, v}});
  }
  {
    auto params = std::make_shared<ParameterList>();
    Rng init(3);
    auto mha = std::make_shared<MultiHeadAttention>(*params, "mha", 8, 2, 3, init);
    auto x = rand_tensor({2, 4, 8}, rng);
    auto mask = std::make_shared<AttentionMask>(AttentionMask::causal(4));
    cases.push_back({"multi_head_attention",
                     [=] { return project((*mha)(x, Tensor(), mask.get()), 11); },
                     detail::with_params({x}, *params)});
  }
  {
    // Every entry at least 0.05 from the threshold, where the gate is smooth.
    auto x = rand_away({4, 5}, rng, 0.05);
    for (auto& v : x.mutable_values()) v += 0.2;
    auto thr = Tensor({1}, {0.2}, true);
    cases.push_back({"spiking_exact", [=] { return project(spiking(x, thr, 0.1, SpikeGradient::exact), 12); },
                     {x, thr}});
  }
  {
    auto x = rand_tensor({2, 3}, rng), h = rand_tensor({2, 4}, rng), c = rand_tensor({2, 4}, rng);
    auto w = rand_tensor({7, 16}, rng), b = rand_tensor({16}, rng);
    cases.push_back({"lstm_cell",
                     [=] {
                       auto [h2, c2] = models::lstm_cell_step(x, h, c, {w, b});
                       return add(project(h2, 13), project(c2, 14));
                     },
                     {x, h, c, w, b}});
  }
  {
    auto p = rand_tensor({6, 1}, rng);
    auto t = Tensor({6, 1}, std::vector<double>(p.values().begin(), p.values().end()));
    std::mt19937_64 r2(9);
    std::uniform_real_distribution<double> off(0.1, 1.0);
    // Targets offset from predictions so |residual| stays away from the kink.
    for (std::size_t i = 0; i < 6; ++i) t.mutable_values()[i] += (i % 2 ? 1.0 : -1.0) * off(r2);
    cases.push_back({"mse_loss", [=] { return mse_loss(p, t); }, {p}});
    cases.push_back({"mae_loss", [=] { return mae_loss(p, t); }, {p}});
    auto pq = rand_tensor({6, 3}, rng);
    auto tq = Tensor({6}, std::vector<double>(6));
    for (std::size_t i = 0; i < 6; ++i) tq.mutable_values()[i] = (i % 2 ? 2.0 : -2.0);
    cases.push_back({"quantile_loss", [=] { return quantile_loss(pq, tq, {0.1, 0.5, 0.9}); }, {pq}});
  }
  {
    auto x = rand_tensor({2, 3, 4}, rng);
    cases.push_back({"reshape_slice_concat",
                     [=] {
                       auto a = slice_last(x, 1, 2);
                       auto b = concat_last({a, x});
                       auto s = stack_steps({select_step(b, 2), select_step(b, 0)});
                       return add(project(reshape(s, {4, 6}), 15), mean(x));
                     },
                     {x}});
  }
  {
    auto spec = models::default_hfformer(1, 4);
    spec.input_dim = 5;
    spec.d_model = 8;
    spec.heads = 2;
    spec.head_dim = 3;
    spec.ffn_dim = 12;
    spec.decoder_hidden = 6;
    std::shared_ptr<models::Model> model = models::make_model(spec, 1);
    models::set_spike_gradient(*model, SpikeGradient::exact);
    auto x = rand_tensor({2, 4, 5}, rng, -1.5, 1.5, false);
    cases.push_back({"hfformer_small", [=] { return project(model->forward(x), 16); },
                     detail::with_params({}, model->params())});
  }
  {
    auto spec = models::default_lstm(1, 4);
    spec.input_dim = 3;
    spec.lstm_hidden = 3;
    spec.lstm_layers = 2;
    std::shared_ptr<models::Model> model = models::make_model(spec, 2);
    auto x = rand_tensor({2, 4, 3}, rng, -1.5, 1.5, false);
    cases.push_back({"lstm_small", [=] { return project(model->forward(x), 17); },
                     detail::with_params({}, model->params())});
  }
  return cases;
}

}  // namespace hflab::testing
