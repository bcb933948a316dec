#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "esi/tensor.hpp"

namespace esi::nn {

// Temperature softmax exp(x/tau) / sum exp(x/tau), max-subtracted.
std::vector<double> temp_softmax(std::span<const double> x, double tau);
// Given y = temp_softmax(x, tau) and dL/dy, returns dL/dx.
std::vector<double> temp_softmax_backward(std::span<const double> y, std::span<const double> grad_y, double tau);

// In-place variants over contiguous rows of length `width`.
void temp_softmax_rows(std::span<double> data, std::size_t width, double tau);
void temp_softmax_rows_backward(std::span<const double> y, std::span<double> grad_inout, std::size_t width,
                                double tau);

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
// Derivative expressed via the pre-activation.
inline double elu_grad(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }
Tensor elu(const Tensor& x);
Tensor elu_backward(const Tensor& pre, const Tensor& grad_out);

// y = x W^T + b over rows of x (rows x in); W is out x in; b may be empty.
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

struct LinearGrads {
    Tensor dx;
    Tensor dW;
    Tensor db;
};

LinearGrads linear_backward(const Tensor& x, const Tensor& W, const Tensor& grad_out, bool has_bias);
// Accumulating form used by the model; skips dx when dx == nullptr.
void linear_backward_into(const Tensor& x, const Tensor& W, const Tensor& grad_out, Tensor* dx, Tensor& dW, Tensor* db);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Tensor normalized;             // pre-affine
    std::vector<double> inv_std;   // per row
};

// Normalizes over the last axis, then applies gain/bias (length = last dim).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache = nullptr);

struct LayerNormGrads {
    Tensor dx;
    Tensor dgain;
    Tensor dbias;
};

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& grad_out);

struct LinearLayer {
    Tensor W;
    Tensor b;
};

struct MlpCache {
    std::vector<Tensor> inputs;        // input to each linear layer
    std::vector<Tensor> pre_activation; // output of each linear layer
};

// Alternating linear + ELU; no activation after the final layer.
Tensor mlp(const Tensor& x, const std::vector<LinearLayer>& layers, MlpCache* cache = nullptr);

struct MlpGrads {
    Tensor dx;
    std::vector<LinearLayer> layers;
};

MlpGrads mlp_backward(const std::vector<LinearLayer>& layers, const MlpCache& cache, const Tensor& grad_out);

}  // namespace esi::nn
