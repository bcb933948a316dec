#pragma once

#include <cstddef>

#include "esi/tensor.hpp"

namespace esi::nn {

// Channels-last layout: activations are H x W x C, kernels are KH x KW x C_in x C_out.
struct ConvGeometry {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;

    static ConvGeometry same(std::size_t kh, std::size_t kw) { return {1, 1, kh / 2, kw / 2}; }
};

// Cross-correlation: H x W x C_in -> H' x W' x C_out. bias may be empty.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geom);

// Adjoint of conv2d with the same kernel: H x W x C_out -> H' x W' x C_in, where
// H' = (H - 1) * stride - 2 * pad + KH + output_padding_h. bias (length C_in) may be empty.
Tensor transpose_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geom,
                        std::size_t output_padding_h = 0, std::size_t output_padding_w = 0);

struct ConvGrads {
    Tensor dx;
    Tensor dkernel;
    Tensor dbias;
};

ConvGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const ConvGeometry& geom, const Tensor& grad_out,
                          bool has_bias);
ConvGrads transpose_conv2d_backward(const Tensor& x, const Tensor& kernel, const ConvGeometry& geom,
                                    const Tensor& grad_out, bool has_bias);

}  // namespace esi::nn
