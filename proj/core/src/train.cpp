// SPDX-License-Identifier: Apache-2.0
#include "hflab/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "hflab/error.hpp"
#include "hflab/nn/loss.hpp"
#include "hflab/nn/optim.hpp"
#include "kv.hpp"

namespace hflab::train {

using features::FeatureRow;
using features::kNumFeatures;
using nn::Tensor;

// ---------------------------------------------------------------- WindowSet

WindowSet::WindowSet(std::shared_ptr<const std::vector<FeatureRow>> rows, std::size_t lookback, std::size_t horizon,
                     std::vector<std::size_t> end_rows)
    : rows_(std::move(rows)), lookback_(lookback), horizon_(horizon), end_rows_(std::move(end_rows)) {
  if (!rows_) raise(ErrorCode::InvalidConfig, "window set without rows");
  if (lookback_ < 2) raise(ErrorCode::InvalidConfig, "look-back must be at least 2");
  for (auto t : end_rows_) {
    if (t + 1 < lookback_ || t >= rows_->size()) {
      raise(ErrorCode::StreamTooShort, "window end " + std::to_string(t) + " out of range");
    }
  }
}

double WindowSet::target(std::size_t i) const {
  const std::size_t t = end_rows_.at(i);
  if (t + horizon_ >= rows_->size()) return std::numeric_limits<double>::quiet_NaN();
  const auto& r = *rows_;
  return features::log_return(r[t][features::col::kMidprice], r[t + horizon_][features::col::kMidprice]);
}

std::vector<double> WindowSet::targets() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = target(i);
  return out;
}

features::FeatureWindow WindowSet::window(std::size_t i) const {
  const std::size_t t = end_rows_.at(i);
  features::FeatureWindow w;
  w.lookback = lookback_;
  w.rows.resize(lookback_ * kNumFeatures);
  w.norm_stats.resize(kNumFeatures);
  const std::span<const FeatureRow> all(*rows_);
  features::normalize_window(all.subspan(t + 1 - lookback_, lookback_), w.rows, w.norm_stats);
  w.target = target(i);
  w.end_row = t;
  w.t_index = t + horizon_;
  return w;
}

Tensor WindowSet::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) raise(ErrorCode::ShapeMismatch, "empty batch");
  const std::size_t per = lookback_ * kNumFeatures;
  std::vector<double> data(indices.size() * per);
  std::vector<features::NormStat> stats(kNumFeatures);
  const std::span<const FeatureRow> all(*rows_);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t t = end_rows_.at(indices[b]);
    features::normalize_window(all.subspan(t + 1 - lookback_, lookback_),
                               std::span<double>(data).subspan(b * per, per), stats);
  }
  return Tensor({indices.size(), lookback_, kNumFeatures}, std::move(data));
}

Splits make_splits(std::shared_ptr<const std::vector<FeatureRow>> rows, std::size_t lookback, std::size_t horizon,
                   SplitFractions fractions, std::size_t stride) {
  if (!rows) raise(ErrorCode::InvalidConfig, "no rows");
  if (horizon == 0) raise(ErrorCode::InvalidConfig, "horizon must be positive");
  if (stride == 0) raise(ErrorCode::InvalidConfig, "stride must be positive");
  if (!(fractions.train > 0.0) || !(fractions.val > 0.0) || fractions.train + fractions.val >= 1.0) {
    raise(ErrorCode::InvalidConfig, "split fractions must be positive and leave room for a test block");
  }
  const std::size_t total = features::window_count(rows->size(), lookback, horizon);
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(total)));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * static_cast<double>(total)));
  const std::size_t first = lookback - 1;

  auto block = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> ends;
    for (std::size_t k = begin; k < end; k += stride) ends.push_back(first + k);
    return WindowSet(rows, lookback, horizon, std::move(ends));
  };
  const std::size_t val_begin = std::min(total, n_train + horizon);
  const std::size_t val_end = std::min(total, val_begin + n_val);
  const std::size_t test_begin = std::min(total, val_end + horizon);
  Splits s{block(0, n_train), block(val_begin, val_end), block(test_begin, total)};
  if (s.train.empty() || s.val.empty() || s.test.empty()) {
    raise(ErrorCode::EmptySplit, std::to_string(total) + " windows are too few for train/val/test blocks");
  }
  return s;
}

// ---------------------------------------------------------------- training

TrainConfig default_train_config(models::ModelKind kind) {
  TrainConfig cfg;
  if (kind == models::ModelKind::lstm) {
    cfg.learning_rate = 0.001;
    cfg.batch_size = 64;
  } else {
    cfg.learning_rate = 0.04;
    cfg.batch_size = 256;
  }
  return cfg;
}

namespace {

Tensor loss_of(const models::ModelSpec& spec, const Tensor& pred, const Tensor& target) {
  switch (spec.loss) {
    case nn::LossKind::mse: return nn::mse_loss(pred, target);
    case nn::LossKind::mae: return nn::mae_loss(pred, target);
    case nn::LossKind::quantile: return nn::quantile_loss(pred, target, spec.quantiles);
  }
  raise(ErrorCode::InvalidConfig, "unknown loss");
}

Tensor target_tensor(const WindowSet& set, std::span<const std::size_t> idx, double scale) {
  std::vector<double> y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    y[i] = set.target(idx[i]);
    if (!std::isfinite(y[i])) raise(ErrorCode::EmptySplit, "window without a defined target in a training split");
    y[i] /= scale;
  }
  return Tensor({idx.size(), 1}, std::move(y));
}

void clip_gradients(nn::ParameterList& params, double max_norm) {
  if (!(max_norm > 0.0)) return;
  double ss = 0.0;
  for (const auto& p : params.items()) {
    for (double g : p.tensor.grad()) ss += g * g;
  }
  const double norm = std::sqrt(ss);
  if (!(norm > max_norm) || !std::isfinite(norm)) return;
  const double factor = max_norm / norm;
  for (auto& p : params.items()) {
    if (!p.tensor.has_grad()) continue;
    for (double& g : p.tensor.mutable_grad()) g *= factor;
  }
}

std::vector<std::vector<double>> snapshot(const nn::ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params.items()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(nn::ParameterList& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto dst = params.items()[k].tensor.mutable_values();
    std::copy(values[k].begin(), values[k].end(), dst.begin());
  }
}

// Batches allocate and free activation buffers of tens of megabytes; keep
// them on the heap instead of paying for fresh mmap pages every step.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace

TrainResult train(const models::ModelSpec& base_spec, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg) {
  if (train_set.empty()) raise(ErrorCode::EmptySplit, "training split is empty");
  if (val_set.empty()) raise(ErrorCode::EmptySplit, "validation split is empty");
  if (cfg.batch_size == 0 || cfg.epochs == 0) raise(ErrorCode::InvalidConfig, "epochs and batch size must be positive");
  if (!(cfg.learning_rate > 0.0) || !(cfg.weight_decay >= 0.0)) {
    raise(ErrorCode::InvalidConfig, "learning rate must be positive and weight decay non-negative");
  }
  models::ModelSpec spec = base_spec;
  spec.loss = cfg.loss;
  spec.quantiles = cfg.loss == nn::LossKind::quantile ? cfg.quantiles : std::vector<double>{};
  if (spec.lookback != train_set.lookback() || spec.lookback != val_set.lookback()) {
    raise(ErrorCode::InvalidConfig, "model look-back differs from the window length");
  }
  if (spec.horizon != train_set.horizon() || spec.horizon != val_set.horizon()) {
    raise(ErrorCode::InvalidConfig, "model horizon differs from the dataset horizon");
  }
  if (train_set.end_rows().back() >= val_set.end_rows().front()) {
    raise(ErrorCode::InvalidConfig, "validation windows must come after training windows");
  }
  spec.target_scale = 1.0;
  if (cfg.scale_targets) {
    const auto y = train_set.targets();
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(y.size()));
    if (sd > 0.0 && std::isfinite(sd)) spec.target_scale = sd;
  }

  tune_allocator();
  const auto start = std::chrono::steady_clock::now();
  nn::MatmulPrecisionScope precision(cfg.fast_matmul ? nn::MatmulPrecision::f32 : nn::MatmulPrecision::f64);
  TrainResult result;
  result.trained.model = models::make_model(spec, cfg.seed);
  models::Model& model = *result.trained.model;
  nn::AdamW optimizer(model.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  nn::Rng shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best = snapshot(model.params());
  std::size_t best_epoch = 0;
  double best_train = 0.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      model.params().zero_grad();
      const Tensor loss = loss_of(spec, model.forward(train_set.batch(idx)), target_tensor(train_set, idx, spec.target_scale));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        raise(ErrorCode::DivergedTraining, "non-finite training loss in epoch " + std::to_string(epoch));
      }
      loss.backward();
      clip_gradients(model.params(), cfg.clip_norm);
      try {
        optimizer.step();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteGradient) throw;
        raise(ErrorCode::DivergedTraining, std::string(e.what()) + " in epoch " + std::to_string(epoch));
      }
      total += value * static_cast<double>(idx.size());
    }
    const double train_loss = total / static_cast<double>(order.size());
    const double val_loss = evaluate_loss(model, val_set);
    if (!std::isfinite(val_loss)) {
      raise(ErrorCode::DivergedTraining, "non-finite validation loss in epoch " + std::to_string(epoch));
    }
    result.curve.push_back({epoch, train_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best_train = train_loss;
      best_epoch = epoch;
      best = snapshot(model.params());
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(model.params(), best);
  result.trained.meta = {cfg.seed, result.curve.size(), best_epoch, best_train, best_val};
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double evaluate_loss(const models::Model& model, const WindowSet& set, std::size_t batch_size) {
  if (set.empty()) raise(ErrorCode::EmptySplit, "cannot evaluate an empty split");
  nn::NoGradGuard no_grad;
  std::vector<std::size_t> idx;
  double total = 0.0;
  for (std::size_t begin = 0; begin < set.size(); begin += batch_size) {
    const std::size_t end = std::min(set.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor loss = loss_of(model.spec(), model.forward(set.batch(idx)), target_tensor(set, idx, model.spec().target_scale));
    total += loss.item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(set.size());
}

std::vector<double> predict(const models::Model& model, const WindowSet& set, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(set.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < set.size(); begin += batch_size) {
    const std::size_t end = std::min(set.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto p = model.predict(set.batch(idx));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

HorizonEval evaluate(const models::Model& model, const WindowSet& set, metrics::R2Baseline baseline) {
  if (set.empty()) raise(ErrorCode::EmptySplit, "cannot evaluate an empty split");
  const auto preds = predict(model, set);
  const auto targets = set.targets();
  HorizonEval e;
  e.horizon = set.horizon();
  e.samples = preds.size();
  e.r2 = metrics::r2_score(preds, targets, baseline);
  e.ratios = metrics::classification_ratios(preds, targets);
  e.weighted = metrics::weighted_classification_ratios(preds, targets);
  return e;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<EpochLog>& curve) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : curve) {
    out << e.epoch << ',' << kv::format_double(e.train_loss) << ',' << kv::format_double(e.val_loss) << '\n';
  }
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<HorizonEval>& rows) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "horizon,r2,buy_tpr,sell_tpr,buy_weighted,sell_weighted,samples\n";
  for (const auto& r : rows) {
    out << r.horizon << ',' << kv::format_double(r.r2) << ',' << kv::format_double(r.ratios.buy) << ','
        << kv::format_double(r.ratios.sell) << ',' << kv::format_double(r.weighted.buy) << ','
        << kv::format_double(r.weighted.sell) << ',' << r.samples << '\n';
  }
}

void write_eval_json(const std::filesystem::path& path, const std::vector<HorizonEval>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"horizon", r.horizon},
                 {"r2", r.r2},
                 {"buy_tpr", r.ratios.buy},
                 {"sell_tpr", r.ratios.sell},
                 {"buy_weighted", r.weighted.buy},
                 {"sell_weighted", r.weighted.sell},
                 {"samples", r.samples}});
  }
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- grid search

namespace {

struct Cell {
  std::string label;
  models::ModelSpec spec;
  TrainConfig cfg;
};

void apply_setting(Cell& cell, const std::string& key, const std::string& value) {
  if (key == "lr") cell.cfg.learning_rate = kv::to_double(key, value);
  else if (key == "batch_size") cell.cfg.batch_size = kv::to_uint(key, value);
  else if (key == "weight_decay") cell.cfg.weight_decay = kv::to_double(key, value);
  else if (key == "epochs") cell.cfg.epochs = kv::to_uint(key, value);
  else if (key == "patience") cell.cfg.patience = kv::to_uint(key, value);
  else {
    std::map<std::string, std::string> fields = kv::parse(cell.spec.to_text());
    fields[key] = value;
    std::string text;
    for (const auto& [k, v] : fields) text += k + " = " + v + "\n";
    cell.spec = models::ModelSpec::from_text(text);
  }
  if (!cell.label.empty()) cell.label += ",";
  cell.label += key + "=" + value;
}

}  // namespace

GridResult grid_search(const models::ModelSpec& spec, const TrainConfig& cfg, const std::vector<GridAxis>& grid,
                       const WindowSet& train_set, const WindowSet& val_set, std::size_t threads) {
  std::vector<Cell> cells{{"", spec, cfg}};
  for (const auto& axis : grid) {
    if (axis.values.empty()) raise(ErrorCode::InvalidConfig, "grid axis '" + axis.key + "' has no values");
    std::vector<Cell> next;
    for (const auto& c : cells) {
      for (const auto& v : axis.values) {
        Cell cell = c;
        apply_setting(cell, axis.key, v);
        next.push_back(std::move(cell));
      }
    }
    cells = std::move(next);
  }

  struct Outcome {
    bool ok = false;
    LeaderboardEntry entry;
    std::string error;
  };
  std::vector<Outcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const TrainResult r = train(cells[i].spec, train_set, val_set, cells[i].cfg);
        outcomes[i].ok = true;
        outcomes[i].entry = {cells[i].label, r.trained.model->spec(), cells[i].cfg, r.trained.meta.val_loss,
                             r.trained.meta.best_epoch};
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  GridResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (outcomes[i].ok) {
      result.leaderboard.push_back(outcomes[i].entry);
    } else {
      result.failures.push_back({cells[i].label, outcomes[i].error});
    }
  }
  std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                   [](const auto& a, const auto& b) { return a.best_val_loss < b.best_val_loss; });
  return result;
}

void write_leaderboard_csv(const std::filesystem::path& path, const GridResult& result) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "rank,cell,best_val_loss,best_epoch,status\n";
  std::size_t rank = 1;
  for (const auto& e : result.leaderboard) {
    out << rank++ << ",\"" << e.label << "\"," << kv::format_double(e.best_val_loss) << ',' << e.best_epoch
        << ",ok\n";
  }
  for (const auto& f : result.failures) out << ",\"" << f.label << "\",,,failed\n";
}

}  // namespace hflab::train
