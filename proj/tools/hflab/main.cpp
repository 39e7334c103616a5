// SPDX-License-Identifier: Apache-2.0
// hflab: ingest -> featurize -> train -> evaluate -> backtest -> report.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hflab/backtest.hpp"
#include "hflab/config.hpp"
#include "hflab/error.hpp"
#include "hflab/features.hpp"
#include "hflab/lob.hpp"
#include "hflab/models.hpp"
#include "hflab/report.hpp"
#include "hflab/train.hpp"

namespace fs = std::filesystem;
using hflab::ErrorCode;
using hflab::raise;

namespace {

int g_verbosity = 1;

void info(const std::string& msg) {
  if (g_verbosity > 0) std::cerr << msg << '\n';
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<std::size_t> horizon;
  std::optional<int> strategy;
  std::optional<std::size_t> signals;
  std::optional<int> sizing;
  std::optional<std::string> min_threshold;

  std::string input;
  std::string out;
  std::string data;
  std::string out_dir = ".";
  std::vector<std::string> checkpoints;
  std::string signals_csv;
  std::vector<std::string> ledgers;
  std::string stats;
  std::size_t n = 20000;
  bool zero_baseline = false;
};

/// Config file contents with command-line flags written over them.
class Settings {
 public:
  explicit Settings(const Options& o) {
    if (!o.config_path.empty()) file_ = hflab::config::ConfigFile::load(o.config_path);
    if (o.seed) file_.set("run", "seed", std::to_string(*o.seed));
    if (o.model) file_.set("model", "kind", *o.model);
    if (o.horizon) {
      file_.set("model", "horizon", std::to_string(*o.horizon));
      file_.set("data", "horizon", std::to_string(*o.horizon));
      file_.set("backtest", "main_horizon", std::to_string(*o.horizon));
    }
    if (o.strategy) file_.set("backtest", "strategy", std::to_string(*o.strategy));
    if (o.signals) file_.set("backtest", "signals", std::to_string(*o.signals));
    if (o.sizing) file_.set("backtest", "sizing", std::to_string(*o.sizing));
    if (o.min_threshold) file_.set("backtest", "min_threshold", *o.min_threshold);
  }

  std::optional<std::string> get(const std::string& s, const std::string& k) const { return file_.get(s, k); }

  std::string str(const std::string& s, const std::string& k, const std::string& def) const {
    return get(s, k).value_or(def);
  }
  double real(const std::string& s, const std::string& k, double def) const {
    const auto v = get(s, k);
    if (!v) return def;
    try {
      std::size_t pos = 0;
      const double d = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument(*v);
      return d;
    } catch (const std::exception&) {
      raise(ErrorCode::InvalidConfig, "[" + s + "] " + k + " is not a number: '" + *v + "'");
    }
  }
  std::uint64_t count(const std::string& s, const std::string& k, std::uint64_t def) const {
    const auto v = get(s, k);
    if (!v) return def;
    if (v->empty() || v->find_first_not_of("0123456789") != std::string::npos) {
      raise(ErrorCode::InvalidConfig, "[" + s + "] " + k + " is not a non-negative integer: '" + *v + "'");
    }
    return std::stoull(*v);
  }
  bool flag(const std::string& s, const std::string& k, bool def) const {
    const auto v = get(s, k);
    if (!v) return def;
    if (*v == "on" || *v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "off" || *v == "false" || *v == "0" || *v == "no") return false;
    raise(ErrorCode::InvalidConfig, "[" + s + "] " + k + " is not on/off: '" + *v + "'");
  }
  /// Mandatory for train and backtest.
  std::uint64_t seed() const {
    if (!get("run", "seed")) raise(ErrorCode::InvalidConfig, "a seed is required (--seed or [run] seed)");
    return count("run", "seed", 0);
  }
  const hflab::config::ConfigFile& file() const { return file_; }

 private:
  hflab::config::ConfigFile file_;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) raise(ErrorCode::InvalidConfig, std::string("missing ") + what + " path");
  if (!fs::exists(path)) raise(ErrorCode::Io, std::string(what) + " not found: " + path);
}

fs::path out_dir(const Options& o) {
  fs::create_directories(o.out_dir);
  return o.out_dir;
}

hflab::features::MidMode mid_mode(const Settings& s) {
  const auto v = s.str("data", "mid_mode", "literal");
  if (v == "literal") return hflab::features::MidMode::literal;
  if (v == "microprice") return hflab::features::MidMode::microprice;
  raise(ErrorCode::InvalidConfig, "mid_mode must be literal or microprice");
}

hflab::features::Dataset load_dataset(const std::string& path) {
  require_file(path, "dataset");
  if (fs::path(path).extension() == ".csv") return hflab::features::read_dataset_csv(path);
  return hflab::features::read_dataset_binary(path);
}

hflab::models::ModelSpec model_spec(const Settings& s, std::size_t horizon) {
  const auto kind = hflab::models::parse_model_kind(s.str("model", "kind", "hfformer"));
  const std::size_t lookback = s.count("data", "lookback", 100);
  auto spec = kind == hflab::models::ModelKind::lstm ? hflab::models::default_lstm(horizon, lookback)
                                                      : hflab::models::default_hfformer(horizon, lookback);
  // Remaining [model] keys use the spec's own key = value vocabulary.
  std::string text = spec.to_text();
  if (const auto it = s.file().sections().find("model"); it != s.file().sections().end()) {
    for (const auto& [k, v] : it->second) {
      if (k == "kind" || k == "horizon" || k == "ablation") continue;
      text += k + " = " + v + "\n";
    }
  }
  spec = hflab::models::ModelSpec::from_text(text);
  spec.horizon = horizon;
  spec.lookback = lookback;
  if (const auto ab = s.get("model", "ablation"); ab && *ab != "none") {
    spec = hflab::models::build_variant(spec, hflab::models::parse_ablation(*ab));
  }
  spec.validate();
  return spec;
}

hflab::train::TrainConfig train_config(const Settings& s, hflab::models::ModelKind kind) {
  auto cfg = hflab::train::default_train_config(kind);
  cfg.seed = s.seed();
  cfg.epochs = s.count("train", "epochs", cfg.epochs);
  cfg.batch_size = s.count("train", "batch_size", cfg.batch_size);
  cfg.learning_rate = s.real("train", "lr", cfg.learning_rate);
  cfg.weight_decay = s.real("train", "weight_decay", cfg.weight_decay);
  cfg.patience = s.count("train", "patience", cfg.patience);
  cfg.clip_norm = s.real("train", "clip_norm", cfg.clip_norm);
  cfg.fast_matmul = s.flag("train", "fast_matmul", cfg.fast_matmul);
  cfg.scale_targets = s.flag("train", "scale_targets", cfg.scale_targets);
  const auto loss = s.str("train", "loss", "mse");
  if (loss == "mse") cfg.loss = hflab::nn::LossKind::mse;
  else if (loss == "mae") cfg.loss = hflab::nn::LossKind::mae;
  else if (loss == "quantile") cfg.loss = hflab::nn::LossKind::quantile;
  else raise(ErrorCode::InvalidConfig, "loss must be mse, mae or quantile");
  if (const auto q = s.get("train", "quantiles")) {
    cfg.quantiles.clear();
    std::stringstream ss(*q);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.quantiles.push_back(std::stod(item));
  }
  return cfg;
}

hflab::train::Splits dataset_splits(const Settings& s, const hflab::features::Dataset& d, std::size_t lookback) {
  auto rows = std::make_shared<const std::vector<hflab::features::FeatureRow>>(d.rows);
  hflab::train::SplitFractions f;
  f.train = s.real("data", "train_fraction", f.train);
  f.val = s.real("data", "val_fraction", f.val);
  return hflab::train::make_splits(rows, lookback, d.horizon, f, s.count("data", "stride", 1));
}

void print_eval(const hflab::train::HorizonEval& e, const std::string& split) {
  std::printf("%s h=%zu r2=%.6f buy_tpr=%.4f sell_tpr=%.4f buy_w=%.4f sell_w=%.4f n=%zu\n", split.c_str(),
              e.horizon, e.r2, e.ratios.buy, e.ratios.sell, e.weighted.buy, e.weighted.sell, e.samples);
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Options& o, const Settings& s) {
  if (o.out.empty()) raise(ErrorCode::InvalidConfig, "--out is required");
  hflab::lob::Regime r;
  r.vol = s.real("synth", "vol", r.vol);
  r.drift = s.real("synth", "drift", r.drift);
  r.spread = s.real("synth", "spread", r.spread);
  r.signal_snr = s.real("synth", "snr", 1.0);
  r.imbalance_phi = s.real("synth", "imbalance_phi", r.imbalance_phi);
  r.imbalance_sd = s.real("synth", "imbalance_sd", r.imbalance_sd);
  const auto stream = hflab::lob::synth_lob_stream(s.count("run", "seed", 0), s.count("synth", "n", o.n), r);
  hflab::lob::write_csv(fs::path(o.out), stream);
  info("wrote " + std::to_string(stream.snapshots.size()) + " snapshots to " + o.out);
  return 0;
}

int cmd_ingest(const Options& o, const Settings& s) {
  require_file(o.input, "input");
  if (o.out.empty()) raise(ErrorCode::InvalidConfig, "--out is required");
  const auto raw = hflab::lob::read_csv(fs::path(o.input));
  const auto deduped = hflab::lob::dedup_stream(raw, hflab::features::midprice_fn(mid_mode(s)));
  hflab::lob::write_csv(fs::path(o.out), deduped);
  const auto gaps = hflab::lob::gap_stats(deduped);
  nlohmann::json j = {{"rows_in", raw.snapshots.size()},
                      {"rows_out", deduped.snapshots.size()},
                      {"gap_count", gaps.count},
                      {"gap_min_ms", gaps.min_ms},
                      {"gap_max_ms", gaps.max_ms},
                      {"gap_mean_ms", gaps.mean_ms},
                      {"gap_histogram_edges_ms", hflab::lob::GapStats::kEdgesMs},
                      {"gap_histogram", gaps.histogram}};
  std::printf("rows_in=%zu rows_out=%zu\n", raw.snapshots.size(), deduped.snapshots.size());
  if (!o.stats.empty()) {
    std::ofstream out(o.stats);
    if (!out) raise(ErrorCode::Io, "cannot write " + o.stats);
    out << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_featurize(const Options& o, const Settings& s) {
  require_file(o.input, "input");
  if (o.out.empty()) raise(ErrorCode::InvalidConfig, "--out is required");
  const std::size_t horizon = s.count("data", "horizon", 1);
  if (horizon == 0) raise(ErrorCode::InvalidConfig, "horizon must be at least 1");
  const auto stream = hflab::lob::read_csv(fs::path(o.input));
  const auto data = hflab::features::make_dataset(stream, horizon, mid_mode(s));
  if (fs::path(o.out).extension() == ".csv") {
    hflab::features::write_dataset_csv(o.out, data);
  } else {
    hflab::features::write_dataset_binary(o.out, data);
  }
  info("wrote " + std::to_string(data.rows.size()) + " feature rows (horizon " + std::to_string(horizon) + ")");
  return 0;
}

int cmd_train(const Options& o, const Settings& s) {
  const auto data = load_dataset(o.data);
  const std::size_t horizon = s.count("model", "horizon", data.horizon);
  if (horizon == 0) raise(ErrorCode::InvalidConfig, "horizon must be at least 1");
  if (horizon != data.horizon) {
    raise(ErrorCode::InvalidConfig, "horizon " + std::to_string(horizon) + " but the dataset was built for " +
                                        std::to_string(data.horizon));
  }
  const auto spec = model_spec(s, horizon);
  const auto cfg = train_config(s, spec.kind);
  const auto splits = dataset_splits(s, data, spec.lookback);
  info("training " + hflab::models::to_string(spec.kind) + " on " + std::to_string(splits.train.size()) +
       " windows, validating on " + std::to_string(splits.val.size()));
  const auto result = hflab::train::train(spec, splits.train, splits.val, cfg);
  const fs::path dir = out_dir(o);
  hflab::models::save_model(dir / "model.ckpt", result.trained);
  hflab::train::write_loss_curve(dir / "loss_curve.csv", result.curve);
  const auto eval = hflab::train::evaluate(*result.trained.model, splits.val);
  hflab::train::write_eval_csv(dir / "eval_val.csv", {eval});
  hflab::train::write_eval_json(dir / "eval_val.json", {eval});
  print_eval(eval, "val");
  return 0;
}

int cmd_evaluate(const Options& o, const Settings& s) {
  const auto data = load_dataset(o.data);
  if (o.checkpoints.empty()) raise(ErrorCode::InvalidConfig, "--checkpoint is required");
  std::vector<hflab::train::HorizonEval> rows;
  const auto baseline = o.zero_baseline ? hflab::metrics::R2Baseline::zero : hflab::metrics::R2Baseline::test_mean;
  for (const auto& path : o.checkpoints) {
    require_file(path, "checkpoint");
    const auto trained = hflab::models::load_model(path);
    const auto& spec = trained.model->spec();
    if (spec.horizon != data.horizon) {
      raise(ErrorCode::ModelHorizonMismatch, path + " forecasts horizon " + std::to_string(spec.horizon) +
                                                 ", dataset horizon is " + std::to_string(data.horizon));
    }
    const auto splits = dataset_splits(s, data, spec.lookback);
    rows.push_back(hflab::train::evaluate(*trained.model, splits.test, baseline));
    print_eval(rows.back(), "test");
  }
  const fs::path dir = out_dir(o);
  hflab::train::write_eval_csv(dir / "eval_test.csv", rows);
  hflab::train::write_eval_json(dir / "eval_test.json", rows);
  return 0;
}

int cmd_backtest(const Options& o, const Settings& s) {
  require_file(o.input, "input");
  (void)s.seed();
  const auto stream = hflab::lob::read_csv(fs::path(o.input));
  hflab::backtest::BacktestConfig cfg;
  cfg.main_horizon = s.count("backtest", "main_horizon", cfg.main_horizon);
  cfg.delay_ticks = s.count("backtest", "delay_ticks", cfg.delay_ticks);
  cfg.trade_qty = s.real("backtest", "trade_qty", cfg.trade_qty);
  cfg.slippage_rate = s.real("backtest", "slippage_rate", cfg.slippage_rate);
  cfg.mid_mode = mid_mode(s);
  if (s.get("backtest", "signals")) {
    cfg.signal_horizons = hflab::backtest::centred_horizons(s.count("backtest", "signals", 1), cfg.main_horizon);
  } else {
    cfg.signal_horizons = hflab::backtest::strategy_horizons(
        static_cast<int>(s.count("backtest", "strategy", 1)), cfg.main_horizon);
  }

  hflab::backtest::SignalMatrix signals;
  if (!o.signals_csv.empty()) {
    require_file(o.signals_csv, "signals csv");
    signals = hflab::backtest::read_signals_csv(o.signals_csv);
  } else {
    if (o.checkpoints.empty()) raise(ErrorCode::InvalidConfig, "--checkpoint or --signals-csv is required");
    std::vector<hflab::models::TrainedModel> trained;
    std::vector<const hflab::models::Model*> models;
    for (const auto& path : o.checkpoints) {
      require_file(path, "checkpoint");
      trained.push_back(hflab::models::load_model(path));
      models.push_back(trained.back().model.get());
    }
    signals = hflab::backtest::generate_signals(models, stream, models.front()->spec().lookback, cfg.mid_mode);
  }

  const double calib = s.real("backtest", "calibration_fraction", 0.5);
  if (!(calib >= 0.0 && calib < 1.0)) raise(ErrorCode::InvalidConfig, "calibration_fraction must lie in [0, 1)");
  cfg.trade_from_tick = static_cast<std::size_t>(std::floor(calib * static_cast<double>(stream.snapshots.size())));
  const auto sizing = s.count("backtest", "sizing", 0);
  if (sizing != 0) {
    cfg.sizing = hflab::backtest::calibrate_sizing(signals, cfg.signal_horizons, sizing, 0, cfg.trade_from_tick);
  }
  if (s.flag("backtest", "min_threshold", false)) {
    cfg.min_threshold = hflab::backtest::calibrate_min_threshold(signals, cfg.signal_horizons, 0, cfg.trade_from_tick);
  }

  const auto ledger = hflab::backtest::run_strategy(stream, signals, cfg);
  const fs::path dir = out_dir(o);
  hflab::backtest::write_ledger_csv(dir / "ledger.csv", ledger);
  hflab::backtest::write_summary_json(dir / "summary.json", ledger);
  hflab::backtest::write_cum_pnl_csv(dir / "cum_pnl.csv", ledger);
  if (o.signals_csv.empty()) hflab::backtest::write_signals_csv(dir / "signals.csv", signals);
  std::printf("trades=%zu discarded=%zu final_pnl=%.6f\n", ledger.trades.size(), ledger.discarded,
              ledger.final_pnl());
  return 0;
}

int cmd_report(const Options& o, const Settings& s) {
  if (o.ledgers.empty()) raise(ErrorCode::InvalidConfig, "at least one ledger is required");
  std::vector<hflab::report::LabelledLedger> ledgers;
  for (const auto& arg : o.ledgers) {
    std::string label;
    std::string path = arg;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      label = arg.substr(0, eq);
      path = arg.substr(eq + 1);
    } else {
      label = fs::path(path).parent_path().filename().string();
      if (label.empty()) label = fs::path(path).stem().string();
    }
    require_file(path, "ledger");
    ledgers.push_back({label, hflab::backtest::read_ledger_csv(path)});
  }
  const auto stats = hflab::report::write_report(out_dir(o), ledgers, s.count("report", "bins", 5),
                                                 s.count("report", "batch", 200));
  for (const auto& st : stats) {
    std::printf("%s trades=%zu final_pnl=%.6f win_ratio=%.4f\n", st.label.c_str(), st.trades, st.final_pnl,
                st.win_ratio);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hflab: limit order book forecasting and backtesting toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Key-value config file ([section] key = value)");
  app.add_option("--seed", o.seed, "Seed for every random draw");
  app.add_flag("-q,--quiet", [](std::int64_t) { g_verbosity = 0; }, "Suppress progress messages");

  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic LOB stream");
  synth->add_option("--out", o.out, "Output CSV")->required();
  synth->add_option("--n", o.n, "Number of snapshots");

  auto* ingest = app.add_subcommand("ingest", "Validate and deduplicate a raw LOB CSV");
  ingest->add_option("--input", o.input, "Raw snapshot CSV")->required();
  ingest->add_option("--out", o.out, "Deduplicated CSV")->required();
  ingest->add_option("--stats", o.stats, "Optional JSON with row counts and gap histogram");

  auto* featurize = app.add_subcommand("featurize", "Build the feature dataset for one horizon");
  featurize->add_option("--input", o.input, "Deduplicated snapshot CSV")->required();
  featurize->add_option("--out", o.out, "Dataset (.csv or binary)")->required();
  featurize->add_option("--horizon", o.horizon, "Forecast horizon in ticks");

  auto* train = app.add_subcommand("train", "Train a model on a featurized dataset");
  train->add_option("--data", o.data, "Featurized dataset")->required();
  train->add_option("--model", o.model, "hfformer or lstm")->check(CLI::IsMember({"hfformer", "lstm"}));
  train->add_option("--horizon", o.horizon, "Forecast horizon in ticks");
  train->add_option("--out-dir", o.out_dir, "Output directory");

  auto* evaluate = app.add_subcommand("evaluate", "Out-of-sample metrics on the test block");
  evaluate->add_option("--data", o.data, "Featurized dataset")->required();
  evaluate->add_option("--checkpoint", o.checkpoints, "Model checkpoint(s)")->required();
  evaluate->add_option("--out-dir", o.out_dir, "Output directory");
  evaluate->add_flag("--zero-baseline", o.zero_baseline, "R2 against a zero forecast instead of the test mean");

  auto* backtest = app.add_subcommand("backtest", "Run a trading strategy over a deduplicated stream");
  backtest->add_option("--input", o.input, "Deduplicated snapshot CSV")->required();
  backtest->add_option("--checkpoint", o.checkpoints, "One checkpoint per signal horizon");
  backtest->add_option("--signals-csv", o.signals_csv, "Precomputed signals instead of checkpoints");
  backtest->add_option("--horizon", o.horizon, "Main trading horizon");
  backtest->add_option("--strategy", o.strategy, "1, 2 or 3")->check(CLI::Range(1, 3));
  backtest->add_option("--signals", o.signals, "Number of centred signal horizons (odd)");
  backtest->add_option("--sizing", o.sizing, "0 (fixed), 2 or 5 thresholds")->check(CLI::IsMember({0, 2, 5}));
  backtest->add_option("--min-threshold", o.min_threshold, "on or off")->check(CLI::IsMember({"on", "off"}));
  backtest->add_option("--out-dir", o.out_dir, "Output directory");

  auto* report = app.add_subcommand("report", "Compare ledgers");
  report->add_option("ledgers", o.ledgers, "Ledger CSVs, optionally label=path")->required();
  report->add_option("--out-dir", o.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  try {
    const Settings settings(o);
    if (*synth) return cmd_synth(o, settings);
    if (*ingest) return cmd_ingest(o, settings);
    if (*featurize) return cmd_featurize(o, settings);
    if (*train) return cmd_train(o, settings);
    if (*evaluate) return cmd_evaluate(o, settings);
    if (*backtest) return cmd_backtest(o, settings);
    if (*report) return cmd_report(o, settings);
  } catch (const hflab::Error& e) {
    std::cerr << "hflab: " << e.what() << '\n';
    return hflab::exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "hflab: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "hflab: " << e.what() << '\n';
    return 4;
  }
  return 4;
}
