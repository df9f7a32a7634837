#include "rulforge/model.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "rulforge/error.hpp"

namespace rulforge {

using nlohmann::json;

void TcnConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("model config: " + m); };
  if (num_blocks < 1) fail("num_blocks must be >= 1");
  if (dilations.empty()) fail("dilations must not be empty");
  for (int d : dilations) {
    if (d < 1) fail("dilations must be positive");
  }
  if (kernel < 1) fail("kernel must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (head_widths.empty() || head_widths.back() != 1) fail("last head width must be 1");
  for (int w : head_widths) {
    if (w < 1) fail("head widths must be positive");
  }
  if (in_features < 1) fail("in_features must be >= 1");
}

std::string TcnConfig::to_json() const {
  json j;
  j["num_blocks"] = num_blocks;
  j["dilations"] = dilations;
  j["kernel"] = kernel;
  j["channels"] = channels;
  j["dropout"] = dropout;
  j["head_widths"] = head_widths;
  j["padding_mode"] = std::string(to_string(padding_mode));
  j["in_features"] = in_features;
  return j.dump();
}

TcnConfig TcnConfig::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    TcnConfig c;
    c.num_blocks = j.at("num_blocks").get<int>();
    c.dilations = j.at("dilations").get<std::vector<int>>();
    c.kernel = j.at("kernel").get<int>();
    c.channels = j.at("channels").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.head_widths = j.at("head_widths").get<std::vector<int>>();
    c.padding_mode = parse_padding_mode(j.at("padding_mode").get<std::string>());
    c.in_features = j.at("in_features").get<int>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

const std::vector<std::string_view>& model_preset_names() {
  static const std::vector<std::string_view> names{"paper-4block", "paper-rf125", "tiny"};
  return names;
}

TcnConfig model_preset(std::string_view name, int in_features) {
  TcnConfig c;
  c.in_features = in_features;
  if (name == "paper-4block") {
    // defaults
  } else if (name == "paper-rf125") {
    c.num_blocks = 2;
  } else if (name == "tiny") {
    c.num_blocks = 1;
    c.channels = 16;
    c.dropout = 0.1;
    c.head_widths = {16, 16, 8, 4, 1};
  } else {
    throw ValidationError("unknown model preset '" + std::string(name) + "'");
  }
  c.validate();
  return c;
}

std::size_t compute_receptive_field(const TcnConfig& cfg) {
  cfg.validate();
  std::size_t span = 0;
  for (int d : cfg.dilations) span += static_cast<std::size_t>((cfg.kernel - 1) * d);
  return 1 + static_cast<std::size_t>(cfg.num_blocks) * span;
}

namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
Tensor<T> batch_features(const PaddedBatch& batch) {
  return batch.features.cast<T>();
}

}  // namespace

template <typename T>
TcnModel<T>::TcnModel(const TcnConfig& cfg, Rng& rng) : config_(cfg) {
  config_.validate();
  const auto C = static_cast<std::size_t>(cfg.channels);
  const auto K = static_cast<std::size_t>(cfg.kernel);

  std::size_t in_ch = static_cast<std::size_t>(cfg.in_features);
  for (int b = 0; b < cfg.num_blocks; ++b) {
    Block block;
    std::size_t layer_in = in_ch;
    for (int d : cfg.dilations) {
      const double bound = std::sqrt(1.0 / static_cast<double>(layer_in * K));
      Conv conv{ParamTensor<T>(uniform_tensor<T>({C, layer_in, K}, bound, rng)),
                ParamTensor<T>(uniform_tensor<T>({C}, bound, rng)),
                static_cast<std::size_t>(d)};
      block.convs.push_back(std::move(conv));
      BatchNorm bn{ParamTensor<T>(Tensor<T>({C}, T{1})), ParamTensor<T>(Tensor<T>({C})),
                   Tensor<T>({C}), Tensor<T>({C}, T{1})};
      block.norms.push_back(std::move(bn));
      layer_in = C;
    }
    if (in_ch != C) {
      const double bound = std::sqrt(1.0 / static_cast<double>(in_ch));
      block.skip = Linear{ParamTensor<T>(uniform_tensor<T>({C, in_ch}, bound, rng)),
                          ParamTensor<T>(uniform_tensor<T>({C}, bound, rng))};
    }
    blocks_.push_back(std::move(block));
    in_ch = C;
  }
  for (int w : cfg.head_widths) {
    const auto out = static_cast<std::size_t>(w);
    const double bound = std::sqrt(1.0 / static_cast<double>(in_ch));
    head_.push_back(Linear{ParamTensor<T>(uniform_tensor<T>({out, in_ch}, bound, rng)),
                           ParamTensor<T>(uniform_tensor<T>({out}, bound, rng))});
    in_ch = out;
  }
}

template <typename T>
Tensor<T> TcnModel<T>::run(const Tensor<T>& features, const Mask& mask, Mode mode,
                           std::uint64_t dropout_seed, Cache* cache) {
  if (features.rank() != 3) {
    throw ShapeError("model: features must be [B, F, L], got " + shape_string(features.shape()));
  }
  if (features.dim(1) != static_cast<std::size_t>(config_.in_features)) {
    throw ShapeError("model: expected " + std::to_string(config_.in_features) +
                     " features, got " + std::to_string(features.dim(1)));
  }
  require_shape(mask.shape(), {features.dim(0), features.dim(2)}, "model: mask");

  if (cache) {
    cache->mask = mask;
    cache->mode = mode;
    cache->blocks.clear();
    cache->head.clear();
  }
  const double rate = config_.dropout;
  std::uint64_t layer_id = 0;
  auto next_seed = [&] { return mix64(dropout_seed ^ mix64(++layer_id)); };

  Tensor<T> x = features;
  apply_mask(x, mask);
  for (auto& block : blocks_) {
    BlockCache bc;
    Tensor<T> h = x;
    for (std::size_t l = 0; l < block.convs.size(); ++l) {
      auto& conv = block.convs[l];
      auto& bn = block.norms[l];
      LayerCache lc;
      Tensor<T> z = conv1d_forward(h, conv.weight.value, conv.bias.value, conv.dilation,
                                   config_.padding_mode);
      Tensor<T> n = masked_batchnorm_forward(z, mask, bn.gamma.value, bn.beta.value, mode,
                                             bn.running_mean, bn.running_var,
                                             kBatchNormMomentum, kBatchNormEpsilon,
                                             cache ? &lc.norm : nullptr);
      Tensor<T> a = relu_forward(n);
      Tensor<T> out = dropout_forward(a, rate, mode, next_seed(),
                                      cache ? &lc.dropout_scale : nullptr);
      if (cache) {
        lc.input = std::move(h);
        lc.activated = std::move(a);
        bc.layers.push_back(std::move(lc));
      }
      h = std::move(out);
    }
    if (block.skip) {
      add_into(h, pointwise_linear_forward(x, block.skip->weight.value, block.skip->bias.value));
    } else {
      add_into(h, x);
    }
    apply_mask(h, mask);
    if (cache) {
      bc.input = std::move(x);
      cache->blocks.push_back(std::move(bc));
    }
    x = std::move(h);
  }

  for (std::size_t i = 0; i < head_.size(); ++i) {
    HeadCache hc;
    Tensor<T> z = pointwise_linear_forward(x, head_[i].weight.value, head_[i].bias.value);
    apply_mask(z, mask);
    const bool last = i + 1 == head_.size();
    if (!last) {
      Tensor<T> a = relu_forward(z);
      z = dropout_forward(a, rate, mode, next_seed(), cache ? &hc.dropout_scale : nullptr);
      if (cache) hc.activated = std::move(a);
    }
    if (cache) {
      hc.input = std::move(x);
      cache->head.push_back(std::move(hc));
    }
    x = std::move(z);
  }

  const std::size_t B = x.dim(0), L = x.dim(2);
  Tensor<T> out({B, L}, std::vector<T>(x.data().begin(), x.data().end()));
  if (!out.all_finite()) throw NonFiniteError("model: non-finite prediction");
  return out;
}

template <typename T>
Tensor<T> TcnModel<T>::forward(const Tensor<T>& features, const Mask& mask, Mode mode,
                               std::uint64_t dropout_seed) {
  cache_.emplace();
  return run(features, mask, mode, dropout_seed, &*cache_);
}

template <typename T>
Tensor<T> TcnModel<T>::forward(const PaddedBatch& batch, Mode mode, std::uint64_t dropout_seed) {
  return forward(batch_features<T>(batch), batch.mask, mode, dropout_seed);
}

template <typename T>
Tensor<T> TcnModel<T>::predict(const Tensor<T>& features, const Mask& mask) const {
  // Eval mode only reads the running statistics.
  return const_cast<TcnModel*>(this)->run(features, mask, Mode::Eval, 0, nullptr);
}

template <typename T>
Tensor<T> TcnModel<T>::predict(const PaddedBatch& batch) const {
  return predict(batch_features<T>(batch), batch.mask);
}

template <typename T>
Tensor<T> TcnModel<T>::backward(const Tensor<T>& grad_output) {
  if (!cache_) throw ValidationError("model: backward() without a preceding forward()");
  Cache& cache = *cache_;
  const Mask& mask = cache.mask;
  const std::size_t B = mask.dim(0), L = mask.dim(1);
  require_shape(grad_output.shape(), {B, L}, "model backward: grad_output");

  Tensor<T> g({B, 1, L}, std::vector<T>(grad_output.data().begin(), grad_output.data().end()));
  for (std::size_t i = head_.size(); i-- > 0;) {
    auto& hc = cache.head[i];
    auto& layer = head_[i];
    if (i + 1 != head_.size()) {
      g = dropout_backward(g, hc.dropout_scale);
      g = relu_backward(g, hc.activated);
    }
    apply_mask(g, mask);
    auto lg = pointwise_linear_backward(g, hc.input, layer.weight.value);
    add_into(layer.weight.grad, lg.weight);
    add_into(layer.bias.grad, lg.bias);
    g = std::move(lg.input);
  }

  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    auto& block = blocks_[bi];
    auto& bc = cache.blocks[bi];
    apply_mask(g, mask);
    Tensor<T> g_in({B, bc.input.dim(1), L});
    if (block.skip) {
      auto sg = pointwise_linear_backward(g, bc.input, block.skip->weight.value);
      add_into(block.skip->weight.grad, sg.weight);
      add_into(block.skip->bias.grad, sg.bias);
      g_in = std::move(sg.input);
    } else {
      g_in = g;
    }
    Tensor<T> gh = std::move(g);
    for (std::size_t l = block.convs.size(); l-- > 0;) {
      auto& lc = bc.layers[l];
      auto& conv = block.convs[l];
      auto& bn = block.norms[l];
      gh = dropout_backward(gh, lc.dropout_scale);
      gh = relu_backward(gh, lc.activated);
      auto ng = masked_batchnorm_backward(gh, mask, bn.gamma.value, lc.norm);
      add_into(bn.gamma.grad, ng.gamma);
      add_into(bn.beta.grad, ng.beta);
      auto cg = conv1d_backward(ng.input, lc.input, conv.weight.value, conv.dilation,
                                config_.padding_mode);
      add_into(conv.weight.grad, cg.weight);
      add_into(conv.bias.grad, cg.bias);
      gh = std::move(cg.input);
    }
    add_into(g_in, gh);
    g = std::move(g_in);
  }
  apply_mask(g, mask);
  return g;
}

template <typename T>
template <typename Fn>
void TcnModel<T>::visit_state(Fn&& fn) {
  // fn(name, ParamTensor*, Tensor* buffer) with exactly one non-null
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& block = blocks_[b];
    const std::string prefix = "block" + std::to_string(b) + ".";
    for (std::size_t l = 0; l < block.convs.size(); ++l) {
      const std::string conv = prefix + "conv" + std::to_string(l) + ".";
      const std::string norm = prefix + "norm" + std::to_string(l) + ".";
      fn(conv + "weight", &block.convs[l].weight, nullptr);
      fn(conv + "bias", &block.convs[l].bias, nullptr);
      fn(norm + "gamma", &block.norms[l].gamma, nullptr);
      fn(norm + "beta", &block.norms[l].beta, nullptr);
    }
    if (block.skip) {
      fn(prefix + "skip.weight", &block.skip->weight, nullptr);
      fn(prefix + "skip.bias", &block.skip->bias, nullptr);
    }
  }
  for (std::size_t i = 0; i < head_.size(); ++i) {
    const std::string prefix = "head" + std::to_string(i) + ".";
    fn(prefix + "weight", &head_[i].weight, nullptr);
    fn(prefix + "bias", &head_[i].bias, nullptr);
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (std::size_t l = 0; l < blocks_[b].norms.size(); ++l) {
      const std::string norm = "block" + std::to_string(b) + ".norm" + std::to_string(l) + ".";
      fn(norm + "running_mean", nullptr, &blocks_[b].norms[l].running_mean);
      fn(norm + "running_var", nullptr, &blocks_[b].norms[l].running_var);
    }
  }
}

template <typename T>
std::vector<std::pair<std::string, ParamTensor<T>*>> TcnModel<T>::parameters() {
  std::vector<std::pair<std::string, ParamTensor<T>*>> out;
  visit_state([&](const std::string& name, ParamTensor<T>* p, Tensor<T>*) {
    if (p) out.emplace_back(name, p);
  });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> TcnModel<T>::state() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  visit_state([&](const std::string& name, ParamTensor<T>* p, Tensor<T>* buf) {
    out.emplace_back(name, p ? &p->value : buf);
  });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> TcnModel<T>::state() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (auto& [name, t] : const_cast<TcnModel*>(this)->state()) out.emplace_back(name, t);
  return out;
}

template <typename T>
void TcnModel<T>::zero_grad() {
  for (auto& [name, p] : parameters()) p->zero_grad();
}

template <typename T>
std::size_t TcnModel<T>::count_parameters() const {
  std::size_t n = 0;
  for (auto& [name, p] : const_cast<TcnModel*>(this)->parameters()) n += p->value.size();
  return n;
}

template class TcnModel<float>;
template class TcnModel<double>;

}  // namespace rulforge
