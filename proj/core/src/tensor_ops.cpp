#include <cmath>
#include <string>

#include "rulforge/ops.hpp"

namespace rulforge {

std::string_view to_string(PaddingMode mode) {
  return mode == PaddingMode::CausalLeft ? "causal_left" : "symmetric";
}

PaddingMode parse_padding_mode(std::string_view text) {
  if (text == "causal_left" || text == "causal") return PaddingMode::CausalLeft;
  if (text == "symmetric") return PaddingMode::Symmetric;
  throw ValidationError("unknown padding mode '" + std::string(text) + "'");
}

std::size_t left_padding(std::size_t kernel, std::size_t dilation, PaddingMode mode) {
  const std::size_t total = (kernel - 1) * dilation;
  return mode == PaddingMode::CausalLeft ? total : total / 2;
}

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finaliser
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

void check_conv_shapes(const Shape& in,
                       const Shape& w, const Shape* bias, std::size_t dilation) {
  if (in.size() != 3) throw ShapeError("conv1d: input must be [B, Cin, L], got " + shape_string(in));
  if (w.size() != 3) throw ShapeError("conv1d: weight must be [Cout, Cin, K], got " + shape_string(w));
  if (w[1] != in[1]) {
    throw ShapeError("conv1d: Cin mismatch, input has " + std::to_string(in[1]) +
                     " channels, weight expects " + std::to_string(w[1]));
  }
  if (bias && (bias->size() != 1 || (*bias)[0] != w[0])) {
    throw ShapeError("conv1d: bias must be [Cout=" + std::to_string(w[0]) + "], got " +
                     shape_string(*bias));
  }
  if (dilation < 1) throw ValidationError("conv1d: dilation must be >= 1");
}

void check_mask(const Shape& x, const Mask& mask, const char* op) {
  if (mask.rank() != 2 || mask.dim(0) != x[0] || mask.dim(1) != x.back()) {
    throw ShapeError(std::string(op) + ": mask shape " + shape_string(mask.shape()) +
                     " does not match [B, L] of " + shape_string(x));
  }
}

// Range of t for which t + shift lies inside [0, L).
struct Span {
  std::size_t lo, hi;
};
Span valid_range(std::ptrdiff_t shift, std::size_t L) {
  const auto l = static_cast<std::ptrdiff_t>(L);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(l, l - shift);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Tensor<T>& weight,
                         const Tensor<T>& bias, std::size_t dilation,
                         PaddingMode mode) {
  check_conv_shapes(input.shape(), weight.shape(), &bias.shape(), dilation);
  const std::size_t B = input.dim(0), Cin = input.dim(1), L = input.dim(2);
  const std::size_t Cout = weight.dim(0), K = weight.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(left_padding(K, dilation, mode));

  Tensor<T> out({B, Cout, L});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Cout; ++o) {
      auto out_row = out.row(b, o);
      std::fill(out_row.begin(), out_row.end(), bias[o]);
      for (std::size_t c = 0; c < Cin; ++c) {
        auto in_row = input.row(b, c);
        for (std::size_t k = 0; k < K; ++k) {
          const T w = weight(o, c, k);
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k * dilation) - pad;
          const auto [lo, hi] = valid_range(shift, L);
          const T* src = in_row.data() + shift;
          T* dst = out_row.data();
          for (std::size_t t = lo; t < hi; ++t) dst[t] += w * src[t];
        }
      }
    }
  }
  return out;
}

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& grad_output, const Tensor<T>& input,
                               const Tensor<T>& weight, std::size_t dilation,
                               PaddingMode mode) {
  check_conv_shapes(input.shape(), weight.shape(), nullptr, dilation);
  const std::size_t B = input.dim(0), Cin = input.dim(1), L = input.dim(2);
  const std::size_t Cout = weight.dim(0), K = weight.dim(2);
  require_shape(grad_output.shape(), {B, Cout, L}, "conv1d_backward: grad_output");
  const auto pad = static_cast<std::ptrdiff_t>(left_padding(K, dilation, mode));

  Conv1dGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()),
                   Tensor<T>({Cout})};
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Cout; ++o) {
      auto go = grad_output.row(b, o);
      T bias_acc{};
      for (std::size_t t = 0; t < L; ++t) bias_acc += go[t];
      g.bias[o] += bias_acc;
      for (std::size_t c = 0; c < Cin; ++c) {
        auto in_row = input.row(b, c);
        auto gi_row = g.input.row(b, c);
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k * dilation) - pad;
          const auto [lo, hi] = valid_range(shift, L);
          const T* src = in_row.data() + shift;
          T* gi = gi_row.data() + shift;
          const T w = weight(o, c, k);
          T acc{};
          for (std::size_t t = lo; t < hi; ++t) {
            acc += go[t] * src[t];
            gi[t] += w * go[t];
          }
          g.weight(o, c, k) += acc;
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> pointwise_linear_forward(const Tensor<T>& input, const Tensor<T>& weight,
                                   const Tensor<T>& bias) {
  if (input.rank() != 3) throw ShapeError("pointwise_linear: input must be [B, Cin, L]");
  if (weight.rank() != 2 || weight.dim(1) != input.dim(1)) {
    throw ShapeError("pointwise_linear: weight " + shape_string(weight.shape()) +
                     " does not match Cin=" + std::to_string(input.dim(1)));
  }
  require_shape(bias.shape(), {weight.dim(0)}, "pointwise_linear: bias");
  const std::size_t B = input.dim(0), Cin = input.dim(1), L = input.dim(2);
  const std::size_t Cout = weight.dim(0);
  Tensor<T> out({B, Cout, L});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Cout; ++o) {
      auto dst = out.row(b, o);
      std::fill(dst.begin(), dst.end(), bias[o]);
      for (std::size_t c = 0; c < Cin; ++c) {
        const T w = weight(o, c);
        auto src = input.row(b, c);
        for (std::size_t t = 0; t < L; ++t) dst[t] += w * src[t];
      }
    }
  }
  return out;
}

template <typename T>
LinearGrads<T> pointwise_linear_backward(const Tensor<T>& grad_output,
                                         const Tensor<T>& input,
                                         const Tensor<T>& weight) {
  const std::size_t B = input.dim(0), Cin = input.dim(1), L = input.dim(2);
  const std::size_t Cout = weight.dim(0);
  require_shape(grad_output.shape(), {B, Cout, L}, "pointwise_linear_backward: grad_output");
  LinearGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({Cout})};
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Cout; ++o) {
      auto go = grad_output.row(b, o);
      T bias_acc{};
      for (std::size_t t = 0; t < L; ++t) bias_acc += go[t];
      g.bias[o] += bias_acc;
      for (std::size_t c = 0; c < Cin; ++c) {
        auto src = input.row(b, c);
        auto gi = g.input.row(b, c);
        const T w = weight(o, c);
        T acc{};
        for (std::size_t t = 0; t < L; ++t) {
          acc += go[t] * src[t];
          gi[t] += w * go[t];
        }
        g.weight(o, c) += acc;
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> masked_batchnorm_forward(const Tensor<T>& input, const Mask& mask,
                                   const Tensor<T>& gamma, const Tensor<T>& beta,
                                   Mode mode, Tensor<T>& running_mean,
                                   Tensor<T>& running_var, double momentum,
                                   double eps, BatchNormCache<T>* cache) {
  if (input.rank() != 3) throw ShapeError("batchnorm: input must be [B, C, L]");
  check_mask(input.shape(), mask, "batchnorm");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  for (const Tensor<T>* p : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean),
                             static_cast<const Tensor<T>*>(&running_var)}) {
    require_shape(p->shape(), {C}, "batchnorm: per-channel parameter");
  }

  std::size_t n = 0;
  for (auto m : mask.data()) n += m ? 1 : 0;
  if (n == 0) throw ValidationError("batchnorm: batch has no valid timesteps");

  Tensor<T> out(input.shape());
  Tensor<T> xhat(input.shape());
  std::vector<T> inv_std(C);

  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        auto x = input.row(b, c);
        for (std::size_t t = 0; t < L; ++t) {
          if (mask(b, t)) sum += static_cast<double>(x[t]);
        }
      }
      mean = sum / static_cast<double>(n);
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        auto x = input.row(b, c);
        for (std::size_t t = 0; t < L; ++t) {
          if (mask(b, t)) {
            const double d = static_cast<double>(x[t]) - mean;
            sq += d * d;
          }
        }
      }
      var = sq / static_cast<double>(n);
      const double unbiased = n > 1 ? sq / static_cast<double>(n - 1) : var;
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mean);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * unbiased);
    } else {
      mean = static_cast<double>(running_mean[c]);
      var = static_cast<double>(running_var[c]);
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[c] = static_cast<T>(istd);
    const T g = gamma[c], bt = beta[c];
    for (std::size_t b = 0; b < B; ++b) {
      auto x = input.row(b, c);
      auto xh = xhat.row(b, c);
      auto y = out.row(b, c);
      for (std::size_t t = 0; t < L; ++t) {
        if (!mask(b, t)) continue;
        xh[t] = static_cast<T>((static_cast<double>(x[t]) - mean) * istd);
        y[t] = g * xh[t] + bt;
      }
    }
  }

  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->valid_count = n;
    cache->mode = mode;
  }
  return out;
}

template <typename T>
BatchNormGrads<T> masked_batchnorm_backward(const Tensor<T>& grad_output,
                                            const Mask& mask, const Tensor<T>& gamma,
                                            const BatchNormCache<T>& cache) {
  const auto& xhat = cache.normalized;
  require_shape(grad_output.shape(), xhat.shape(), "batchnorm_backward: grad_output");
  const std::size_t B = xhat.dim(0), C = xhat.dim(1), L = xhat.dim(2);
  const double n = static_cast<double>(cache.valid_count);

  BatchNormGrads<T> g{Tensor<T>(xhat.shape()), Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      auto dy = grad_output.row(b, c);
      auto xh = xhat.row(b, c);
      for (std::size_t t = 0; t < L; ++t) {
        if (!mask(b, t)) continue;
        sum_dy += static_cast<double>(dy[t]);
        sum_dy_xhat += static_cast<double>(dy[t]) * static_cast<double>(xh[t]);
      }
    }
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    g.beta[c] = static_cast<T>(sum_dy);

    const double gm = static_cast<double>(gamma[c]);
    const double istd = static_cast<double>(cache.inv_std[c]);
    for (std::size_t b = 0; b < B; ++b) {
      auto dy = grad_output.row(b, c);
      auto xh = xhat.row(b, c);
      auto dx = g.input.row(b, c);
      for (std::size_t t = 0; t < L; ++t) {
        if (!mask(b, t)) continue;
        if (cache.mode == Mode::Train) {
          // d/dx of gamma * (x - mean) / std, with mean and std depending on x.
          dx[t] = static_cast<T>(gm * istd / n *
                                 (n * static_cast<double>(dy[t]) - sum_dy -
                                  static_cast<double>(xh[t]) * sum_dy_xhat));
        } else {
          dx[t] = static_cast<T>(gm * istd * static_cast<double>(dy[t]));
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T{} ? v : T{};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& forward_output) {
  require_shape(grad_output.shape(), forward_output.shape(), "relu_backward");
  Tensor<T> g(grad_output.shape());
  auto go = grad_output.data();
  auto y = forward_output.data();
  auto gi = g.data();
  for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = y[i] > T{} ? go[i] : T{};
  return g;
}

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double rate, Mode mode,
                          std::uint64_t seed, Tensor<T>* scale) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValidationError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::Eval || rate == 0.0) {
    if (scale) *scale = Tensor<T>(input.shape(), T{1});
    return input;
  }
  if (input.rank() != 3) throw ShapeError("dropout: input must be [B, C, L]");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> out(input.shape());
  Tensor<T> s(input.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint64_t hb = mix64(seed ^ mix64(b));
    for (std::size_t c = 0; c < C; ++c) {
      const std::uint64_t hc = mix64(hb ^ mix64(c + 0x51ed27ULL));
      auto x = input.row(b, c);
      auto y = out.row(b, c);
      auto sr = s.row(b, c);
      for (std::size_t t = 0; t < L; ++t) {
        const std::uint64_t h = mix64(hc ^ mix64(t + 0xa5a5a5ULL));
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        sr[t] = u >= rate ? keep_scale : T{};
        y[t] = x[t] * sr[t];
      }
    }
  }
  if (scale) *scale = std::move(s);
  return out;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const Tensor<T>& scale) {
  require_shape(grad_output.shape(), scale.shape(), "dropout_backward");
  Tensor<T> g = grad_output;
  auto s = scale.data();
  auto d = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= s[i];
  return g;
}

template <typename T>
void apply_mask(Tensor<T>& x, const Mask& mask) {
  check_mask(x.shape(), mask, "apply_mask");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      auto r = x.row(b, c);
      for (std::size_t t = 0; t < L; ++t) {
        if (!mask(b, t)) r[t] = T{};
      }
    }
  }
}

template <typename T>
LossResult<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                              const Mask& mask) {
  require_shape(target.shape(), pred.shape(), "mse_loss: target");
  if (pred.rank() != 2) throw ShapeError("mse_loss: prediction must be [B, L]");
  require_shape(mask.shape(), pred.shape(), "mse_loss: mask");

  std::size_t n = 0;
  for (auto m : mask.data()) n += m ? 1 : 0;
  if (n == 0) throw ValidationError("mse_loss: no valid positions");

  LossResult<T> r{0.0, Tensor<T>(pred.shape())};
  auto p = pred.data();
  auto y = target.data();
  auto m = mask.data();
  auto g = r.grad.data();
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!m[i]) continue;
    const double d = static_cast<double>(p[i]) - static_cast<double>(y[i]);
    sum += d * d;
    g[i] = static_cast<T>(2.0 * d * inv_n);
  }
  r.loss = sum * inv_n;
  if (!std::isfinite(r.loss)) throw NonFiniteError("mse_loss: non-finite loss");
  return r;
}

#define RULFORGE_INSTANTIATE_OPS(T)                                                  \
  template Tensor<T> conv1d_forward(const Tensor<T>&, const Tensor<T>&,              \
                                    const Tensor<T>&, std::size_t, PaddingMode);     \
  template Conv1dGrads<T> conv1d_backward(const Tensor<T>&, const Tensor<T>&,        \
                                          const Tensor<T>&, std::size_t,             \
                                          PaddingMode);                              \
  template Tensor<T> pointwise_linear_forward(const Tensor<T>&, const Tensor<T>&,    \
                                              const Tensor<T>&);                     \
  template LinearGrads<T> pointwise_linear_backward(                                 \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> masked_batchnorm_forward(                                       \
      const Tensor<T>&, const Mask&, const Tensor<T>&, const Tensor<T>&, Mode,       \
      Tensor<T>&, Tensor<T>&, double, double, BatchNormCache<T>*);                   \
  template BatchNormGrads<T> masked_batchnorm_backward(                              \
      const Tensor<T>&, const Mask&, const Tensor<T>&, const BatchNormCache<T>&);    \
  template Tensor<T> relu_forward(const Tensor<T>&);                                 \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> dropout_forward(const Tensor<T>&, double, Mode, std::uint64_t,  \
                                     Tensor<T>*);                                    \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);           \
  template void apply_mask(Tensor<T>&, const Mask&);                                 \
  template LossResult<T> masked_mse_loss(const Tensor<T>&, const Tensor<T>&,         \
                                         const Mask&);

RULFORGE_INSTANTIATE_OPS(float)
RULFORGE_INSTANTIATE_OPS(double)

#undef RULFORGE_INSTANTIATE_OPS

}  // namespace rulforge
