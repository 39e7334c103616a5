// SPDX-License-Identifier: Apache-2.0
#include "hflab/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <tuple>

#include "hflab/error.hpp"
#include "hflab/nn/ops.hpp"
#include "kv.hpp"

namespace hflab::models {

using nn::Tensor;

// ---------------------------------------------------------------- ModelSpec

std::size_t ModelSpec::outputs() const noexcept {
  return loss == nn::LossKind::quantile ? quantiles.size() : 1;
}

std::size_t ModelSpec::point_column() const {
  if (loss != nn::LossKind::quantile) return 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < quantiles.size(); ++i) {
    if (std::abs(quantiles[i] - 0.5) < std::abs(quantiles[best] - 0.5)) best = i;
  }
  return best;
}

std::size_t ModelSpec::resolved_head_dim() const {
  if (heads == 0) raise(ErrorCode::IndivisibleHeads, "heads must be positive");
  if (head_dim != 0) return head_dim;
  if (d_model % heads != 0) {
    raise(ErrorCode::IndivisibleHeads,
          "d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  return d_model / heads;
}

void ModelSpec::validate() const {
  if (input_dim == 0) raise(ErrorCode::InvalidConfig, "input_dim must be positive");
  if (lookback == 0) raise(ErrorCode::InvalidConfig, "lookback must be positive");
  if (horizon == 0) raise(ErrorCode::InvalidConfig, "horizon must be positive");
  if (loss == nn::LossKind::quantile) {
    if (quantiles.empty()) raise(ErrorCode::QuantileOutOfRange, "quantile loss without quantiles");
    for (double q : quantiles) {
      if (!(q > 0.0 && q < 1.0)) raise(ErrorCode::QuantileOutOfRange, "quantile " + kv::format_double(q));
    }
  }
  if (kind == ModelKind::lstm) {
    if (use_positional_encoding || use_transformer_decoder || plain_prelu) {
      raise(ErrorCode::InvalidAblation, "ablation flags apply to hfformer only");
    }
    if (lstm_hidden == 0 || lstm_layers == 0) raise(ErrorCode::InvalidConfig, "lstm needs hidden size and layers");
    return;
  }
  if (d_model == 0 || ffn_dim == 0 || decoder_hidden == 0 || encoder_blocks == 0) {
    raise(ErrorCode::InvalidConfig, "hfformer dimensions must be positive");
  }
  resolved_head_dim();
  if (use_positional_encoding && d_model % 2 != 0) {
    raise(ErrorCode::OddDimension, "positional encoding needs an even d_model");
  }
  if (!(spike_temperature > 0.0)) raise(ErrorCode::InvalidConfig, "spike_temperature must be positive");
}

namespace {

std::string loss_name(nn::LossKind k) {
  switch (k) {
    case nn::LossKind::mse: return "mse";
    case nn::LossKind::mae: return "mae";
    case nn::LossKind::quantile: return "quantile";
  }
  return "mse";
}

nn::LossKind parse_loss(const std::string& s) {
  if (s == "mse") return nn::LossKind::mse;
  if (s == "mae") return nn::LossKind::mae;
  if (s == "quantile") return nn::LossKind::quantile;
  raise(ErrorCode::InvalidConfig, "unknown loss '" + s + "'");
}

}  // namespace

std::string ModelSpec::to_text() const {
  std::string s;
  auto line = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  auto num = [&](const std::string& k, std::size_t v) { line(k, std::to_string(v)); };
  auto flag = [&](const std::string& k, bool v) { line(k, v ? "true" : "false"); };
  line("kind", to_string(kind));
  num("input_dim", input_dim);
  num("lookback", lookback);
  num("horizon", horizon);
  line("loss", loss_name(loss));
  line("quantiles", kv::join(quantiles));
  line("target_scale", kv::format_double(target_scale));
  if (kind == ModelKind::hfformer) {
    num("d_model", d_model);
    num("heads", heads);
    num("head_dim", head_dim);
    num("encoder_blocks", encoder_blocks);
    num("ffn_dim", ffn_dim);
    num("decoder_hidden", decoder_hidden);
    line("spike_temperature", kv::format_double(spike_temperature));
    line("gate_order", gate_order == GateOrder::prelu_then_spike ? "prelu_then_spike" : "spike_then_prelu");
    flag("use_positional_encoding", use_positional_encoding);
    flag("use_transformer_decoder", use_transformer_decoder);
    flag("plain_prelu", plain_prelu);
  } else {
    num("lstm_hidden", lstm_hidden);
    num("lstm_layers", lstm_layers);
  }
  return s;
}

ModelSpec ModelSpec::from_text(const std::string& text) {
  const auto kvs = kv::parse(text);
  auto it = kvs.find("kind");
  if (it == kvs.end()) raise(ErrorCode::InvalidConfig, "model spec lacks 'kind'");
  ModelSpec s = parse_model_kind(it->second) == ModelKind::lstm ? default_lstm() : default_hfformer();
  for (const auto& [k, v] : kvs) {
    if (k == "kind") continue;
    if (k == "input_dim") s.input_dim = kv::to_uint(k, v);
    else if (k == "lookback") s.lookback = kv::to_uint(k, v);
    else if (k == "horizon") s.horizon = kv::to_uint(k, v);
    else if (k == "loss") s.loss = parse_loss(v);
    else if (k == "quantiles") s.quantiles = kv::to_doubles(k, v);
    else if (k == "target_scale") s.target_scale = kv::to_double(k, v);
    else if (k == "d_model") s.d_model = kv::to_uint(k, v);
    else if (k == "heads") s.heads = kv::to_uint(k, v);
    else if (k == "head_dim") s.head_dim = kv::to_uint(k, v);
    else if (k == "encoder_blocks") s.encoder_blocks = kv::to_uint(k, v);
    else if (k == "ffn_dim") s.ffn_dim = kv::to_uint(k, v);
    else if (k == "decoder_hidden") s.decoder_hidden = kv::to_uint(k, v);
    else if (k == "spike_temperature") s.spike_temperature = kv::to_double(k, v);
    else if (k == "gate_order") {
      if (v == "prelu_then_spike") s.gate_order = GateOrder::prelu_then_spike;
      else if (v == "spike_then_prelu") s.gate_order = GateOrder::spike_then_prelu;
      else raise(ErrorCode::InvalidConfig, "unknown gate_order '" + v + "'");
    }
    else if (k == "use_positional_encoding") s.use_positional_encoding = kv::to_bool(k, v);
    else if (k == "use_transformer_decoder") s.use_transformer_decoder = kv::to_bool(k, v);
    else if (k == "plain_prelu") s.plain_prelu = kv::to_bool(k, v);
    else if (k == "lstm_hidden") s.lstm_hidden = kv::to_uint(k, v);
    else if (k == "lstm_layers") s.lstm_layers = kv::to_uint(k, v);
    else raise(ErrorCode::InvalidConfig, "unknown model spec key '" + k + "'");
  }
  return s;
}

ModelSpec default_hfformer(std::size_t horizon, std::size_t lookback) {
  ModelSpec s;
  s.kind = ModelKind::hfformer;
  s.horizon = horizon;
  s.lookback = lookback;
  return s;
}

ModelSpec default_lstm(std::size_t horizon, std::size_t lookback) {
  ModelSpec s;
  s.kind = ModelKind::lstm;
  s.horizon = horizon;
  s.lookback = lookback;
  return s;
}

ModelSpec build_variant(const ModelSpec& base, Ablation ablation) {
  if (base.kind != ModelKind::hfformer) raise(ErrorCode::InvalidAblation, "ablations apply to hfformer only");
  ModelSpec s = base;
  switch (ablation) {
    case Ablation::no_spiking: s.plain_prelu = true; break;
    case Ablation::with_pe: s.use_positional_encoding = true; break;
    case Ablation::transformer_decoder: s.use_transformer_decoder = true; break;
  }
  return s;
}

std::string to_string(ModelKind kind) { return kind == ModelKind::lstm ? "lstm" : "hfformer"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "hfformer") return ModelKind::hfformer;
  if (text == "lstm") return ModelKind::lstm;
  raise(ErrorCode::InvalidConfig, "unknown model kind '" + text + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::no_spiking: return "no_spiking";
    case Ablation::with_pe: return "with_pe";
    case Ablation::transformer_decoder: return "transformer_decoder";
  }
  return "";
}

Ablation parse_ablation(const std::string& text) {
  if (text == "no_spiking") return Ablation::no_spiking;
  if (text == "with_pe") return Ablation::with_pe;
  if (text == "transformer_decoder") return Ablation::transformer_decoder;
  raise(ErrorCode::InvalidAblation, "unknown ablation '" + text + "'");
}

// ---------------------------------------------------------------- models

std::vector<double> Model::predict(const Tensor& x) const {
  nn::NoGradGuard no_grad;
  const Tensor y = forward(x);
  const std::size_t cols = spec_.outputs();
  const std::size_t col = spec_.point_column();
  const auto v = y.values();
  std::vector<double> out(v.size() / cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i * cols + col] * spec_.target_scale;
  return out;
}

namespace {

/// Feed-forward activation: PReLU alone, or PReLU combined with a spiking gate.
class GatedActivation {
 public:
  GatedActivation() = default;
  GatedActivation(nn::ParameterList& params, const std::string& prefix, const ModelSpec& spec)
      : plain_(spec.plain_prelu), order_(spec.gate_order) {
    prelu_ = nn::PRelu(params, prefix + ".prelu");
    if (!plain_) spike_ = nn::Spiking(params, prefix + ".spike", spec.spike_temperature);
  }

  Tensor operator()(const Tensor& x) const {
    if (plain_) return prelu_(x);
    if (order_ == GateOrder::prelu_then_spike) return spike_(prelu_(x));
    return prelu_(spike_(x));
  }

  void set_mode(nn::SpikeGradient mode) {
    if (!plain_) spike_.set_mode(mode);
  }

 private:
  bool plain_ = true;
  GateOrder order_ = GateOrder::prelu_then_spike;
  nn::PRelu prelu_;
  nn::Spiking spike_;
};

struct EncoderBlock {
  nn::MultiHeadAttention attn;
  nn::LayerNorm norm1;
  nn::Linear ffn1;
  GatedActivation act;
  nn::Linear ffn2;
  nn::LayerNorm norm2;

  EncoderBlock(nn::ParameterList& p, const std::string& pre, const ModelSpec& s, nn::Rng& rng)
      : attn(p, pre + ".attn", s.d_model, s.heads, s.resolved_head_dim(), rng),
        norm1(p, pre + ".norm1", s.d_model),
        ffn1(p, pre + ".ffn1", s.d_model, s.ffn_dim, rng),
        act(p, pre + ".ffn_act", s),
        ffn2(p, pre + ".ffn2", s.ffn_dim, s.d_model, rng),
        norm2(p, pre + ".norm2", s.d_model) {}

  Tensor operator()(const Tensor& h) const {
    const Tensor a = norm1.add_norm(h, attn(h));
    return norm2.add_norm(a, ffn2(act(ffn1(a))));
  }
};

/// Causal self-attention over the decoder input, cross-attention to the
/// encoder memory, then a feed-forward block; each with Add & Norm.
struct DecoderBlock {
  nn::MultiHeadAttention self_attn;
  nn::LayerNorm norm1;
  nn::MultiHeadAttention cross_attn;
  nn::LayerNorm norm2;
  nn::Linear ffn1;
  GatedActivation act;
  nn::Linear ffn2;
  nn::LayerNorm norm3;

  DecoderBlock(nn::ParameterList& p, const std::string& pre, const ModelSpec& s, nn::Rng& rng)
      : self_attn(p, pre + ".self_attn", s.d_model, s.heads, s.resolved_head_dim(), rng),
        norm1(p, pre + ".norm1", s.d_model),
        cross_attn(p, pre + ".cross_attn", s.d_model, s.heads, s.resolved_head_dim(), rng),
        norm2(p, pre + ".norm2", s.d_model),
        ffn1(p, pre + ".ffn1", s.d_model, s.ffn_dim, rng),
        act(p, pre + ".ffn_act", s),
        ffn2(p, pre + ".ffn2", s.ffn_dim, s.d_model, rng),
        norm3(p, pre + ".norm3", s.d_model) {}

  Tensor operator()(const Tensor& d, const Tensor& memory, const nn::AttentionMask& causal) const {
    const Tensor a = norm1.add_norm(d, self_attn(d, Tensor(), &causal));
    const Tensor b = norm2.add_norm(a, cross_attn(a, memory));
    return norm3.add_norm(b, ffn2(act(ffn1(b))));
  }
};

class HfFormer final : public Model {
 public:
  HfFormer(const ModelSpec& spec, nn::Rng& rng) : Model(spec), causal_(nn::AttentionMask::causal(spec.lookback)) {
    input_ = nn::Linear(params_, "input", spec.input_dim, spec.d_model, rng);
    for (std::size_t i = 0; i < spec.encoder_blocks; ++i) {
      encoder_.emplace_back(params_, "encoder" + std::to_string(i), spec, rng);
    }
    if (spec.use_transformer_decoder) {
      dec_embed_ = nn::Linear(params_, "decoder.embed", 1, spec.d_model, rng);
      decoder_.emplace_back(params_, "decoder.block", spec, rng);
    }
    head1_ = nn::Linear(params_, "head.fc1", spec.lookback * spec.d_model, spec.decoder_hidden, rng);
    head_act_ = nn::PRelu(params_, "head.prelu");
    head2_ = nn::Linear(params_, "head.fc2", spec.decoder_hidden, spec.outputs(), rng);
    if (spec.use_positional_encoding) pe_ = nn::sinusoidal_pe(spec.lookback, spec.d_model);
  }

  Tensor forward(const Tensor& x) const override {
    check_input(x);
    const std::size_t batch = x.dim(0);
    Tensor h = input_(x);
    if (pe_.defined()) h = nn::add_broadcast(h, pe_);
    for (const auto& block : encoder_) h = block(h);
    if (!decoder_.empty()) {
      Tensor d = dec_embed_(nn::slice_last(x, features::col::kLaggedReturn, 1));
      if (pe_.defined()) d = nn::add_broadcast(d, pe_);
      h = decoder_.front()(d, h, causal_);
    }
    const Tensor flat = nn::reshape(h, {batch, spec_.lookback * spec_.d_model});
    return head2_(head_act_(head1_(flat)));
  }

  void set_spike_mode(nn::SpikeGradient mode) {
    for (auto& b : encoder_) b.act.set_mode(mode);
    for (auto& b : decoder_) b.act.set_mode(mode);
  }

 private:
  void check_input(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(1) != spec_.lookback || x.dim(2) != spec_.input_dim) {
      raise(ErrorCode::ShapeMismatch, "hfformer input " + nn::shape_string(x.shape()) + ", expected [B," +
                                          std::to_string(spec_.lookback) + "," + std::to_string(spec_.input_dim) +
                                          "]");
    }
  }

  nn::AttentionMask causal_;
  nn::Linear input_;
  std::vector<EncoderBlock> encoder_;
  nn::Linear dec_embed_;
  std::vector<DecoderBlock> decoder_;
  nn::Linear head1_;
  nn::PRelu head_act_;
  nn::Linear head2_;
  Tensor pe_;
};

class Lstm final : public Model {
 public:
  Lstm(const ModelSpec& spec, nn::Rng& rng) : Model(spec) {
    const std::size_t hidden = spec.lstm_hidden;
    for (std::size_t l = 0; l < spec.lstm_layers; ++l) {
      const std::size_t in = l == 0 ? spec.input_dim : hidden;
      const std::string pre = "lstm" + std::to_string(l);
      LstmCellParams cell;
      cell.w = params_.add(pre + ".w", nn::uniform_init({hidden + in, 4 * hidden}, hidden + in, rng));
      Tensor b({4 * hidden}, 0.0);
      auto bv = b.mutable_values();
      for (std::size_t j = 0; j < hidden; ++j) bv[j] = 1.0;  // forget gate
      cell.b = params_.add(pre + ".b", b);
      cells_.push_back(cell);
    }
    head_ = nn::Linear(params_, "head", hidden, spec.outputs(), rng);
  }

  Tensor forward(const Tensor& x) const override {
    if (x.rank() != 3 || x.dim(2) != spec_.input_dim || x.dim(1) == 0) {
      raise(ErrorCode::ShapeMismatch, "lstm input " + nn::shape_string(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t steps = x.dim(1);
    const std::size_t hidden = spec_.lstm_hidden;
    std::vector<Tensor> seq;
    seq.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) seq.push_back(nn::select_step(x, t));
    for (const auto& cell : cells_) {
      Tensor h({batch, hidden}, 0.0);
      Tensor c({batch, hidden}, 0.0);
      for (std::size_t t = 0; t < steps; ++t) {
        std::tie(h, c) = lstm_cell_step(seq[t], h, c, cell);
        seq[t] = h;
      }
    }
    return head_(seq.back());
  }

 private:
  std::vector<LstmCellParams> cells_;
  nn::Linear head_;
};

std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                         const LstmCellParams& params) {
  if (h.rank() != 2 || c.shape() != h.shape() || x.rank() != 2 || x.dim(0) != h.dim(0)) {
    raise(ErrorCode::ShapeMismatch, "lstm cell: x " + nn::shape_string(x.shape()) + ", h " +
                                        nn::shape_string(h.shape()) + ", c " + nn::shape_string(c.shape()));
  }
  const std::size_t hidden = h.dim(1);
  const Tensor z = nn::linear(nn::concat_last({h, x}), params.w, params.b);
  const Tensor f = nn::sigmoid(nn::slice_last(z, 0, hidden));
  const Tensor i = nn::sigmoid(nn::slice_last(z, hidden, hidden));
  const Tensor o = nn::sigmoid(nn::slice_last(z, 2 * hidden, hidden));
  const Tensor g = nn::tanh(nn::slice_last(z, 3 * hidden, hidden));
  const Tensor c_next = nn::add(nn::mul(f, c), nn::mul(i, g));
  const Tensor h_next = nn::mul(o, nn::tanh(c_next));
  return {h_next, c_next};
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  nn::Rng rng(seed);
  if (spec.kind == ModelKind::lstm) return std::make_unique<Lstm>(spec, rng);
  return std::make_unique<HfFormer>(spec, rng);
}

std::size_t parameter_count(const ModelSpec& s) {
  s.validate();
  if (s.kind == ModelKind::lstm) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < s.lstm_layers; ++l) {
      const std::size_t in = l == 0 ? s.input_dim : s.lstm_hidden;
      n += (s.lstm_hidden + in) * 4 * s.lstm_hidden + 4 * s.lstm_hidden;
    }
    return n + linear_count(s.lstm_hidden, s.outputs());
  }
  const std::size_t inner = s.heads * s.resolved_head_dim();
  const std::size_t attn = 3 * linear_count(s.d_model, inner) + linear_count(inner, s.d_model);
  const std::size_t act = s.plain_prelu ? 1 : 2;
  const std::size_t ffn = linear_count(s.d_model, s.ffn_dim) + act + linear_count(s.ffn_dim, s.d_model);
  const std::size_t norm = 2 * s.d_model;
  std::size_t n = linear_count(s.input_dim, s.d_model);
  n += s.encoder_blocks * (attn + norm + ffn + norm);
  if (s.use_transformer_decoder) n += linear_count(1, s.d_model) + 2 * attn + 3 * norm + ffn;
  n += linear_count(s.lookback * s.d_model, s.decoder_hidden) + 1 + linear_count(s.decoder_hidden, s.outputs());
  return n;
}

void set_spike_gradient(Model& model, nn::SpikeGradient mode) {
  if (auto* hf = dynamic_cast<HfFormer*>(&model)) hf->set_spike_mode(mode);
}

// ---------------------------------------------------------------- persistence

std::string TrainMeta::to_text() const {
  std::string s;
  s += "seed = " + std::to_string(seed) + "\n";
  s += "epochs = " + std::to_string(epochs) + "\n";
  s += "best_epoch = " + std::to_string(best_epoch) + "\n";
  s += "train_loss = " + kv::format_double(train_loss) + "\n";
  s += "val_loss = " + kv::format_double(val_loss) + "\n";
  return s;
}

TrainMeta TrainMeta::from_text(const std::string& text) {
  TrainMeta m;
  for (const auto& [k, v] : kv::parse(text)) {
    if (k == "seed") m.seed = kv::to_uint(k, v);
    else if (k == "epochs") m.epochs = kv::to_uint(k, v);
    else if (k == "best_epoch") m.best_epoch = kv::to_uint(k, v);
    else if (k == "train_loss") m.train_loss = kv::to_double(k, v);
    else if (k == "val_loss") m.val_loss = kv::to_double(k, v);
  }
  return m;
}

void save_model(const std::filesystem::path& path, const TrainedModel& trained) {
  if (!trained.model) raise(ErrorCode::MissingModel, "nothing to save");
  nn::save_checkpoint(path, {trained.model->spec().to_text(), trained.meta.to_text()}, trained.model->params());
}

TrainedModel load_model(const std::filesystem::path& path) {
  const auto header = nn::read_checkpoint_header(path);
  ModelSpec spec;
  try {
    spec = ModelSpec::from_text(header.spec_text);
  } catch (const Error& e) {
    raise(ErrorCode::BadCheckpoint, std::string("embedded model spec: ") + e.what());
  }
  TrainedModel trained;
  trained.model = make_model(spec, 0);
  nn::load_checkpoint(path, trained.model->params());
  trained.meta = TrainMeta::from_text(header.meta_text);
  return trained;
}

Tensor windows_to_batch(std::span<const features::FeatureWindow> windows) {
  if (windows.empty()) raise(ErrorCode::ShapeMismatch, "empty window batch");
  const std::size_t lookback = windows.front().lookback;
  std::vector<double> data;
  data.reserve(windows.size() * lookback * features::kNumFeatures);
  for (const auto& w : windows) {
    if (w.lookback != lookback) raise(ErrorCode::ShapeMismatch, "windows differ in look-back length");
    data.insert(data.end(), w.rows.begin(), w.rows.end());
  }
  return Tensor({windows.size(), lookback, features::kNumFeatures}, std::move(data));
}

}  // namespace hflab::models
