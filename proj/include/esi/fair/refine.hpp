#pragma once

#include <span>
#include <vector>

#include "esi/fair/config.hpp"
#include "esi/nn/attention.hpp"
#include "esi/nn/ops.hpp"
#include "esi/tensor.hpp"

// Feature refinement views over a patch grid P (N_c x N_p x l).
namespace esi::fair {

struct SpectralCache {
    Tensor raw_re;   // FFT coefficients per patch
    Tensor raw_im;
    Tensor soft_re;  // temperature softmax of each
    Tensor soft_im;
    double imag_energy = 0.0;  // discarded by the real-part IFFT, summed over patches
};

// Per patch: FFT, temperature softmax of the real and imaginary vectors, real part of the IFFT.
Tensor spectral_refine(const Tensor& P, double tau, SpectralMode mode = SpectralMode::replace,
                       SpectralCache* cache = nullptr);
Tensor spectral_refine_backward(const SpectralCache& cache, double tau, SpectralMode mode, const Tensor& grad);

// Temperature softmax along each patch's time axis.
Tensor temporal_refine(const Tensor& P, double tau);
Tensor temporal_refine_backward(const Tensor& refined, double tau, const Tensor& grad);

// alpha * P_S + (1 - alpha) * P_T.
Tensor fuse(const Tensor& spectral, const Tensor& temporal, double alpha);

double patch_energy(const Tensor& P, std::size_t channel, std::size_t patch);
// Index of the highest-energy patch of a channel; smallest index on ties.
std::size_t select_key_patch(const Tensor& P, std::size_t channel);

// Learnable tensors of one patch-wise refinement stage, in store order.
enum PatchParam : std::size_t {
    kEmbedW,      // d       scalar token -> d embedding
    kEmbedB,      // d
    kQuery,       // d x d
    kKey,         // d x d
    kValue,       // d x d
    kOutW,        // d       attention row -> scalar summary
    kOutB,        // 1
    kConvKernel,  // k x k x 2l x D
    kConvBias,    // D
    kConvGain,    // D
    kConvShift,   // D
    kTconvKernel, // k x k x l x D
    kTconvBias,   // l
    kTconvGain,   // l
    kTconvShift,  // l
    kPatchParamCount
};

const char* patch_param_name(PatchParam p);
std::vector<Dims> patch_param_dims(std::size_t patch_length, std::size_t attention_dim, std::size_t conv_kernel,
                                   std::size_t conv_depth);

struct PatchRefineCache {
    Tensor input;                      // P^L
    std::vector<std::size_t> key_index;
    std::vector<nn::AttentionCache> attention;
    std::vector<Tensor> embedded;      // l x d per channel
    std::vector<Tensor> attended;      // l x d per channel
    Tensor summary;                    // N_c x l
    Tensor augmented;                  // P^A: N_c x N_p x 2l
    Tensor conv_pre;                   // N_c x N_p x D
    nn::LayerNormCache conv_norm;
    Tensor conv_out;
    Tensor tconv_pre;                  // N_c x N_p x l
    nn::LayerNormCache tconv_norm;
};

// Key-patch self-attention summary concatenated onto every patch of its channel, then
// Conv2D-ELU-LayerNorm and TransposeConv2D-ELU-LayerNorm over the N_c x N_p grid.
Tensor patch_refine(const Tensor& PL, std::span<const Tensor> weights, PatchRefineCache* cache = nullptr);

// Attention summary (length l) of a single key patch.
std::vector<double> key_patch_summary(std::span<const double> key_patch, std::span<const Tensor> weights);

// Accumulates weight gradients into dweights; returns dL/dP^L when need_input_grad.
Tensor patch_refine_backward(const PatchRefineCache& cache, std::span<const Tensor> weights, const Tensor& grad,
                             std::span<Tensor> dweights, bool need_input_grad);

}  // namespace esi::fair
