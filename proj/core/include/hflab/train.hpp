// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hflab/features.hpp"
#include "hflab/metrics.hpp"
#include "hflab/models.hpp"
#include "hflab/nn/tensor.hpp"

namespace hflab::train {

/// Windows over a shared feature-row sequence, normalized on demand when a
/// batch is requested. Targets come from the midprice column at `horizon`;
/// windows near the end of the data carry a NaN target.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::shared_ptr<const std::vector<features::FeatureRow>> rows, std::size_t lookback,
            std::size_t horizon, std::vector<std::size_t> end_rows);

  std::size_t size() const noexcept { return end_rows_.size(); }
  bool empty() const noexcept { return end_rows_.empty(); }
  std::size_t lookback() const noexcept { return lookback_; }
  std::size_t horizon() const noexcept { return horizon_; }
  const std::vector<std::size_t>& end_rows() const noexcept { return end_rows_; }
  double target(std::size_t i) const;
  std::vector<double> targets() const;

  /// Materializes window i exactly as make_windows would.
  features::FeatureWindow window(std::size_t i) const;
  /// [B, L, 38] for the listed window indices.
  nn::Tensor batch(std::span<const std::size_t> indices) const;

 private:
  std::shared_ptr<const std::vector<features::FeatureRow>> rows_;
  std::size_t lookback_ = 0;
  std::size_t horizon_ = 0;
  std::vector<std::size_t> end_rows_;
};

struct SplitFractions {
  double train = 0.7;
  double val = 0.15;
  // The remainder is the test block.
};

struct Splits {
  WindowSet train;
  WindowSet val;
  WindowSet test;
};

/// Contiguous train/val/test blocks over all windows with a defined target,
/// in time order. A gap of `horizon` windows is dropped at each boundary so no
/// training target overlaps a later block. `stride` thins every block.
Splits make_splits(std::shared_ptr<const std::vector<features::FeatureRow>> rows, std::size_t lookback,
                   std::size_t horizon, SplitFractions fractions = {}, std::size_t stride = 1);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double learning_rate = 0.04;
  double weight_decay = 0.01;
  nn::LossKind loss = nn::LossKind::mse;
  std::vector<double> quantiles{0.1, 0.5, 0.9};
  std::uint64_t seed = 0;
  /// Non-improving epochs tolerated before stopping; 0 disables early stopping.
  std::size_t patience = 5;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  /// Fit targets divided by their training-split standard deviation.
  bool scale_targets = true;
  /// Matrix products in 32-bit during training (values and gradients stay 64-bit).
  bool fast_matmul = true;
};

/// Table defaults per model family.
TrainConfig default_train_config(models::ModelKind kind);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  models::TrainedModel trained;
  std::vector<EpochLog> curve;
  bool stopped_early = false;
  double seconds = 0.0;
};

/// Mini-batch AdamW on `train_set`, validating after every epoch. Returns the
/// parameters of the best validation epoch. The model is built from `spec`
/// with its loss (and quantiles) taken from `cfg`.
/// Throws EmptySplit, DivergedTraining, InvalidConfig.
TrainResult train(const models::ModelSpec& spec, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg);

/// Mean loss of `model` over `set` in the model's loss kind.
double evaluate_loss(const models::Model& model, const WindowSet& set, std::size_t batch_size = 512);

/// Point forecasts for every window in `set`.
std::vector<double> predict(const models::Model& model, const WindowSet& set, std::size_t batch_size = 512);

struct HorizonEval {
  std::size_t horizon = 0;
  double r2 = 0.0;
  metrics::ClassRatios ratios;
  metrics::ClassRatios weighted;
  std::size_t samples = 0;
};

HorizonEval evaluate(const models::Model& model, const WindowSet& set,
                     metrics::R2Baseline baseline = metrics::R2Baseline::test_mean);

void write_loss_curve(const std::filesystem::path& path, const std::vector<EpochLog>& curve);
void write_eval_csv(const std::filesystem::path& path, const std::vector<HorizonEval>& rows);
void write_eval_json(const std::filesystem::path& path, const std::vector<HorizonEval>& rows);

/// One axis of a hyperparameter grid. Keys are model-spec keys (as in
/// ModelSpec::to_text) or the training keys lr, batch_size, weight_decay,
/// epochs, patience.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct LeaderboardEntry {
  std::string label;
  models::ModelSpec spec;
  TrainConfig cfg;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
};

struct GridFailure {
  std::string label;
  std::string error;
};

struct GridResult {
  std::vector<LeaderboardEntry> leaderboard;  // ascending best_val_loss
  std::vector<GridFailure> failures;
};

/// Trains every grid cell with the same seed and splits on up to `threads`
/// workers. Failed cells are recorded and the sweep continues.
GridResult grid_search(const models::ModelSpec& spec, const TrainConfig& cfg, const std::vector<GridAxis>& grid,
                       const WindowSet& train_set, const WindowSet& val_set, std::size_t threads = 1);

void write_leaderboard_csv(const std::filesystem::path& path, const GridResult& result);

}  // namespace hflab::train
