#pragma once

#include <cstdint>
#include <string_view>

#include "rulforge/tensor.hpp"

namespace rulforge {

enum class PaddingMode { CausalLeft, Symmetric };
enum class Mode { Train, Eval };

std::string_view to_string(PaddingMode mode);
PaddingMode parse_padding_mode(std::string_view text);

/// Zeros inserted before the first timestep for a length-preserving
/// convolution. The remainder of (kernel - 1) * dilation goes on the right.
std::size_t left_padding(std::size_t kernel, std::size_t dilation, PaddingMode mode);

// ---------------------------------------------------------------------------
// Dilated 1-D convolution. input [B, Cin, L], weight [Cout, Cin, K],
// bias [Cout] -> [B, Cout, L].

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Tensor<T>& weight,
                         const Tensor<T>& bias, std::size_t dilation,
                         PaddingMode mode);

template <typename T>
struct Conv1dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& grad_output, const Tensor<T>& input,
                               const Tensor<T>& weight, std::size_t dilation,
                               PaddingMode mode);

// ---------------------------------------------------------------------------
// 1x1 convolution. input [B, Cin, L], weight [Cout, Cin], bias [Cout].

template <typename T>
Tensor<T> pointwise_linear_forward(const Tensor<T>& input, const Tensor<T>& weight,
                                   const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> pointwise_linear_backward(const Tensor<T>& grad_output,
                                         const Tensor<T>& input,
                                         const Tensor<T>& weight);

// ---------------------------------------------------------------------------
// Batch normalisation over the valid timesteps of each channel.

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;      // x-hat, zero at masked positions
  std::vector<T> inv_std;    // per channel
  std::size_t valid_count = 0;
  Mode mode = Mode::Train;
};

/// Train mode normalises with the masked batch statistics and folds them into
/// running_mean / running_var (unbiased variance) with `momentum`. Eval mode
/// uses the running statistics. Masked positions of the output are zero.
template <typename T>
Tensor<T> masked_batchnorm_forward(const Tensor<T>& input, const Mask& mask,
                                   const Tensor<T>& gamma, const Tensor<T>& beta,
                                   Mode mode, Tensor<T>& running_mean,
                                   Tensor<T>& running_var,
                                   double momentum = kBatchNormMomentum,
                                   double eps = kBatchNormEpsilon,
                                   BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> masked_batchnorm_backward(const Tensor<T>& grad_output,
                                            const Mask& mask, const Tensor<T>& gamma,
                                            const BatchNormCache<T>& cache);

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

/// Gradient of relu given the forward *output* (or input; the sign pattern is
/// the same). The derivative at exactly zero is taken as 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& forward_output);

/// Inverted dropout on a [B, C, L] tensor. The keep decision for element
/// (b, c, t) is a hash of (seed, b, c, t), so it does not depend on L or on
/// any other element. Eval mode and rate 0 are the identity. `scale` receives
/// the per-element multiplier (0 or 1 / (1 - rate)) for the backward pass.
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double rate, Mode mode,
                          std::uint64_t seed, Tensor<T>* scale = nullptr);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const Tensor<T>& scale);

/// Zero every masked timestep of a [B, C, L] tensor in place.
template <typename T>
void apply_mask(Tensor<T>& x, const Mask& mask);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d pred
};

/// Mean squared error over positions where mask == 1.
template <typename T>
LossResult<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                              const Mask& mask);

/// Deterministic 64-bit mixer used for hashed dropout.
std::uint64_t mix64(std::uint64_t x);

}  // namespace rulforge
