// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hflab/features.hpp"
#include "hflab/nn/checkpoint.hpp"
#include "hflab/nn/layers.hpp"
#include "hflab/nn/loss.hpp"

namespace hflab::models {

enum class ModelKind { hfformer, lstm };
enum class Ablation { no_spiking, with_pe, transformer_decoder };

/// Order of the two activations inside the encoder feed-forward block.
enum class GateOrder { prelu_then_spike, spike_then_prelu };

struct ModelSpec {
  ModelKind kind = ModelKind::hfformer;
  std::size_t input_dim = features::kNumFeatures;
  std::size_t lookback = 100;
  std::size_t horizon = 1;

  // hfformer
  std::size_t d_model = 64;
  std::size_t heads = 6;
  /// Per-head projection width; 0 means d_model / heads (must divide).
  std::size_t head_dim = 11;
  std::size_t encoder_blocks = 1;
  std::size_t ffn_dim = 256;
  std::size_t decoder_hidden = 64;
  double spike_temperature = 0.1;
  GateOrder gate_order = GateOrder::prelu_then_spike;
  bool use_positional_encoding = false;
  bool use_transformer_decoder = false;
  bool plain_prelu = false;

  // lstm
  std::size_t lstm_hidden = 16;
  std::size_t lstm_layers = 5;

  nn::LossKind loss = nn::LossKind::mse;
  /// One output per entry when loss == quantile.
  std::vector<double> quantiles;
  /// Network outputs are in units of target_scale; predict() multiplies back.
  double target_scale = 1.0;

  std::size_t outputs() const noexcept;
  /// Output column used as the point forecast (the median in quantile mode).
  std::size_t point_column() const;
  /// Throws IndivisibleHeads when head_dim is 0 and d_model % heads != 0.
  std::size_t resolved_head_dim() const;
  /// Throws InvalidConfig / IndivisibleHeads / InvalidAblation / QuantileOutOfRange.
  void validate() const;

  /// Human-readable `key = value` lines; from_text(to_text()) round-trips.
  std::string to_text() const;
  static ModelSpec from_text(const std::string& text);

  bool operator==(const ModelSpec&) const = default;
};

ModelSpec default_hfformer(std::size_t horizon = 1, std::size_t lookback = 100);
ModelSpec default_lstm(std::size_t horizon = 1, std::size_t lookback = 100);

/// Same spec with one ablation flag set. Throws InvalidAblation for LSTM specs.
ModelSpec build_variant(const ModelSpec& base, Ablation ablation);

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);
std::string to_string(Ablation ablation);
Ablation parse_ablation(const std::string& text);

class Model {
 public:
  virtual ~Model() = default;

  /// [B, L, input_dim] -> [B, outputs].
  virtual nn::Tensor forward(const nn::Tensor& x) const = 0;

  const ModelSpec& spec() const noexcept { return spec_; }
  nn::ParameterList& params() noexcept { return params_; }
  const nn::ParameterList& params() const noexcept { return params_; }

  /// Point forecasts for a batch, evaluated without gradient tracking.
  std::vector<double> predict(const nn::Tensor& x) const;

 protected:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}

  ModelSpec spec_;
  nn::ParameterList params_;
};

/// Validates `spec` and builds a model with weights drawn from `seed`.
std::unique_ptr<Model> make_model(const ModelSpec& spec, std::uint64_t seed);

/// Closed-form parameter count for a spec.
std::size_t parameter_count(const ModelSpec& spec);

/// Sets the surrogate/exact gradient mode on every spiking gate of an HFformer.
void set_spike_gradient(Model& model, nn::SpikeGradient mode);

struct LstmCellParams {
  nn::Tensor w;  // [(hidden + in), 4 * hidden], gate blocks ordered f, i, o, candidate
  nn::Tensor b;  // [4 * hidden]
};

/// One LSTM step on a batch: x [B, in], h/c [B, hidden] -> (h', c') with
/// c' = f*c + i*tanh(.) and h' = o*tanh(c').
std::pair<nn::Tensor, nn::Tensor> lstm_cell_step(const nn::Tensor& x, const nn::Tensor& h, const nn::Tensor& c,
                                                 const LstmCellParams& params);

struct TrainMeta {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;

  std::string to_text() const;
  static TrainMeta from_text(const std::string& text);
};

struct TrainedModel {
  std::unique_ptr<Model> model;
  TrainMeta meta;
};

void save_model(const std::filesystem::path& path, const TrainedModel& trained);
TrainedModel load_model(const std::filesystem::path& path);

/// Packs normalized windows into a [B, L, input_dim] tensor.
nn::Tensor windows_to_batch(std::span<const features::FeatureWindow> windows);

}  // namespace hflab::models
