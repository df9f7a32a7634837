#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rulforge/ops.hpp"
#include "rulforge/preprocess.hpp"
#include "rulforge/tensor.hpp"

namespace rulforge {

struct TcnConfig {
  int num_blocks = 4;
  std::vector<int> dilations{1, 2, 4, 8, 16};
  int kernel = 3;
  int channels = 200;
  double dropout = 0.3;
  std::vector<int> head_widths{100, 50, 25, 10, 1};
  PaddingMode padding_mode = PaddingMode::CausalLeft;
  int in_features = 24;

  void validate() const;

  std::string to_json() const;
  static TcnConfig from_json(const std::string& text);

  bool operator==(const TcnConfig&) const = default;
};

/// Named architecture presets: "paper-4block" (four blocks, receptive field
/// 249), "paper-rf125" (two blocks, receptive field 125) and "tiny"
/// (one block of 16 channels, for tests and quick runs).
TcnConfig model_preset(std::string_view name, int in_features);
const std::vector<std::string_view>& model_preset_names();

/// Number of input steps that can reach one output step.
std::size_t compute_receptive_field(const TcnConfig& cfg);

/// Residual TCN: `num_blocks` blocks of dilated conv -> masked batch norm ->
/// relu -> dropout, each block adding its (1x1-projected when widths differ)
/// input, followed by a pointwise projection head with one output per step.
///
/// forward() caches activations for a subsequent backward(). Masked
/// timesteps are zero after every layer, so padding never reaches valid
/// outputs or gradients.
template <typename T>
class TcnModel {
 public:
  TcnModel(const TcnConfig& cfg, Rng& rng);

  const TcnConfig& config() const noexcept { return config_; }

  /// [B, F, L] features -> [B, L] predictions (0 at masked steps).
  Tensor<T> forward(const Tensor<T>& features, const Mask& mask, Mode mode,
                    std::uint64_t dropout_seed = 0);
  Tensor<T> forward(const PaddedBatch& batch, Mode mode, std::uint64_t dropout_seed = 0);

  /// Eval-mode forward that touches no model state.
  Tensor<T> predict(const PaddedBatch& batch) const;
  Tensor<T> predict(const Tensor<T>& features, const Mask& mask) const;

  /// Accumulates parameter gradients for the last forward() call.
  /// Returns d loss / d features.
  Tensor<T> backward(const Tensor<T>& grad_output);

  void zero_grad();

  /// Trainable tensors in a fixed order.
  std::vector<std::pair<std::string, ParamTensor<T>*>> parameters();
  /// Trainable tensors followed by batch-norm running statistics.
  std::vector<std::pair<std::string, Tensor<T>*>> state();
  std::vector<std::pair<std::string, const Tensor<T>*>> state() const;

  std::size_t count_parameters() const;

 private:
  struct Conv {
    ParamTensor<T> weight, bias;
    std::size_t dilation;
  };
  struct Linear {
    ParamTensor<T> weight, bias;
  };
  struct BatchNorm {
    ParamTensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;
  };
  struct Block {
    std::vector<Conv> convs;
    std::vector<BatchNorm> norms;
    std::optional<Linear> skip;
  };

  struct LayerCache {
    Tensor<T> input;
    BatchNormCache<T> norm;
    Tensor<T> activated;
    Tensor<T> dropout_scale;
  };
  struct BlockCache {
    Tensor<T> input;
    std::vector<LayerCache> layers;
  };
  struct HeadCache {
    Tensor<T> input;
    Tensor<T> activated;
    Tensor<T> dropout_scale;
  };
  struct Cache {
    Mask mask;
    Mode mode = Mode::Eval;
    std::vector<BlockCache> blocks;
    std::vector<HeadCache> head;
  };

  Tensor<T> run(const Tensor<T>& features, const Mask& mask, Mode mode,
                std::uint64_t dropout_seed, Cache* cache);

  template <typename Fn>
  void visit_state(Fn&& fn);

  TcnConfig config_;
  std::vector<Block> blocks_;
  std::vector<Linear> head_;
  std::optional<Cache> cache_;
};

extern template class TcnModel<float>;
extern template class TcnModel<double>;

using Model = TcnModel<float>;

inline Model build_model(const TcnConfig& cfg, Rng& rng) { return Model(cfg, rng); }

inline std::size_t count_parameters(const Model& model) { return model.count_parameters(); }

}  // namespace rulforge
