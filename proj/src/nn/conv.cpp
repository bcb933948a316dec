#include "esi/nn/conv.hpp"

#include "esi/error.hpp"

namespace esi::nn {
namespace {

struct Shape {
    std::size_t kh, kw, cin, cout;
};

Shape kernel_shape(const Tensor& kernel) {
    if (kernel.rank() != 4) throw ParameterError("conv kernel must be KH x KW x C_in x C_out");
    return {kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(3)};
}

void require_activation(const Tensor& x, std::size_t channels, const char* what) {
    if (x.rank() != 3 || x.dim(2) != channels) {
        throw ParameterError(std::string(what) + ": activation " + dims_to_string(x.dims()) + " needs " +
                             std::to_string(channels) + " channels");
    }
}

// Visits every (input pixel, output pixel, kernel tap) triple of a cross-correlation.
// in: conv-input spatial size; out: conv-output spatial size.
template <typename F>
void for_each_tap(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w, const Shape& k,
                  const ConvGeometry& g, F&& f) {
    for (std::size_t oh = 0; oh < out_h; ++oh) {
        for (std::size_t kh = 0; kh < k.kh; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + kh) - static_cast<std::ptrdiff_t>(g.pad_h);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
            for (std::size_t ow = 0; ow < out_w; ++ow) {
                for (std::size_t kw = 0; kw < k.kw; ++kw) {
                    const std::ptrdiff_t iw =
                        static_cast<std::ptrdiff_t>(ow * g.stride_w + kw) - static_cast<std::ptrdiff_t>(g.pad_w);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
                    f(static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), oh, ow, kh, kw);
                }
            }
        }
    }
}

// out (conv-output space) += correlate(x (conv-input space), kernel)
void correlate(const Tensor& x, const Tensor& kernel, const Shape& k, const ConvGeometry& g, Tensor& out) {
    const std::size_t in_w = x.dim(1), out_w = out.dim(1);
    for_each_tap(x.dim(0), in_w, out.dim(0), out_w, k, g,
                 [&](std::size_t ih, std::size_t iw, std::size_t oh, std::size_t ow, std::size_t kh, std::size_t kw) {
                     const double* xp = x.data() + (ih * in_w + iw) * k.cin;
                     double* yp = out.data() + (oh * out_w + ow) * k.cout;
                     const double* kp = kernel.data() + (kh * k.kw + kw) * k.cin * k.cout;
                     for (std::size_t ci = 0; ci < k.cin; ++ci) {
                         const double xv = xp[ci];
                         if (xv == 0.0) continue;
                         const double* kr = kp + ci * k.cout;
                         for (std::size_t co = 0; co < k.cout; ++co) yp[co] += xv * kr[co];
                     }
                 });
}

// out (conv-input space) += adjoint of correlate applied to y (conv-output space)
void scatter(const Tensor& y, const Tensor& kernel, const Shape& k, const ConvGeometry& g, Tensor& out) {
    const std::size_t in_w = out.dim(1), out_w = y.dim(1);
    for_each_tap(out.dim(0), in_w, y.dim(0), out_w, k, g,
                 [&](std::size_t ih, std::size_t iw, std::size_t oh, std::size_t ow, std::size_t kh, std::size_t kw) {
                     const double* yp = y.data() + (oh * out_w + ow) * k.cout;
                     double* xp = out.data() + (ih * in_w + iw) * k.cin;
                     const double* kp = kernel.data() + (kh * k.kw + kw) * k.cin * k.cout;
                     for (std::size_t ci = 0; ci < k.cin; ++ci) {
                         const double* kr = kp + ci * k.cout;
                         double acc = 0.0;
                         for (std::size_t co = 0; co < k.cout; ++co) acc += kr[co] * yp[co];
                         xp[ci] += acc;
                     }
                 });
}

// dkernel += sum over taps of x_in (conv-input space) (x) grad (conv-output space)
void kernel_grad(const Tensor& x_in, const Tensor& grad, const Shape& k, const ConvGeometry& g, Tensor& dkernel) {
    const std::size_t in_w = x_in.dim(1), out_w = grad.dim(1);
    for_each_tap(x_in.dim(0), in_w, grad.dim(0), out_w, k, g,
                 [&](std::size_t ih, std::size_t iw, std::size_t oh, std::size_t ow, std::size_t kh, std::size_t kw) {
                     const double* xp = x_in.data() + (ih * in_w + iw) * k.cin;
                     const double* gp = grad.data() + (oh * out_w + ow) * k.cout;
                     double* kp = dkernel.data() + (kh * k.kw + kw) * k.cin * k.cout;
                     for (std::size_t ci = 0; ci < k.cin; ++ci) {
                         const double xv = xp[ci];
                         if (xv == 0.0) continue;
                         double* kr = kp + ci * k.cout;
                         for (std::size_t co = 0; co < k.cout; ++co) kr[co] += xv * gp[co];
                     }
                 });
}

void add_bias(Tensor& y, const Tensor& bias) {
    if (bias.empty()) return;
    const std::size_t c = y.dim(2);
    if (bias.size() != c) throw ParameterError("conv bias length must equal output channels");
    for (std::size_t i = 0; i < y.size(); i += c)
        for (std::size_t j = 0; j < c; ++j) y[i + j] += bias[j];
}

Tensor bias_grad(const Tensor& grad, bool has_bias) {
    if (!has_bias) return {};
    const std::size_t c = grad.dim(2);
    Tensor db({c});
    for (std::size_t i = 0; i < grad.size(); i += c)
        for (std::size_t j = 0; j < c; ++j) db[j] += grad[i + j];
    return db;
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ParameterError("conv stride must be > 0");
    if (in + 2 * pad < k) throw ParameterError("conv kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

std::size_t transpose_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, std::size_t out_pad) {
    if (stride == 0) throw ParameterError("conv stride must be > 0");
    if (out_pad >= stride && out_pad > 0) throw ParameterError("output padding must be < stride");
    const std::size_t full = (in - 1) * stride + k + out_pad;
    if (in == 0 || full <= 2 * pad) throw ParameterError("transpose conv output would be empty");
    return full - 2 * pad;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geom) {
    const Shape k = kernel_shape(kernel);
    require_activation(x, k.cin, "conv2d");
    Tensor y({conv_out(x.dim(0), k.kh, geom.stride_h, geom.pad_h), conv_out(x.dim(1), k.kw, geom.stride_w, geom.pad_w),
              k.cout});
    correlate(x, kernel, k, geom, y);
    add_bias(y, bias);
    return y;
}

Tensor transpose_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geom,
                        std::size_t output_padding_h, std::size_t output_padding_w) {
    const Shape k = kernel_shape(kernel);
    require_activation(x, k.cout, "transpose_conv2d");
    Tensor y({transpose_out(x.dim(0), k.kh, geom.stride_h, geom.pad_h, output_padding_h),
              transpose_out(x.dim(1), k.kw, geom.stride_w, geom.pad_w, output_padding_w), k.cin});
    scatter(x, kernel, k, geom, y);
    add_bias(y, bias);
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const ConvGeometry& geom, const Tensor& grad_out,
                          bool has_bias) {
    const Shape k = kernel_shape(kernel);
    require_activation(grad_out, k.cout, "conv2d_backward");
    ConvGrads g{Tensor(x.dims()), Tensor(kernel.dims()), bias_grad(grad_out, has_bias)};
    scatter(grad_out, kernel, k, geom, g.dx);
    kernel_grad(x, grad_out, k, geom, g.dkernel);
    return g;
}

ConvGrads transpose_conv2d_backward(const Tensor& x, const Tensor& kernel, const ConvGeometry& geom,
                                    const Tensor& grad_out, bool has_bias) {
    const Shape k = kernel_shape(kernel);
    require_activation(grad_out, k.cin, "transpose_conv2d_backward");
    ConvGrads g{Tensor(x.dims()), Tensor(kernel.dims()), bias_grad(grad_out, has_bias)};
    correlate(grad_out, kernel, k, geom, g.dx);
    kernel_grad(grad_out, x, k, geom, g.dkernel);
    return g;
}

}  // namespace esi::nn
