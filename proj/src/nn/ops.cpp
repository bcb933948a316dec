#include "esi/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "esi/error.hpp"

namespace esi::nn {
namespace {

void require_tau(double tau) {
    if (!(tau > 0.0)) throw ParameterError("softmax temperature must be > 0");
}

std::size_t row_count(const Tensor& x, std::size_t width) { return width == 0 ? 0 : x.size() / width; }

}  // namespace

std::vector<double> temp_softmax(std::span<const double> x, double tau) {
    std::vector<double> y(x.begin(), x.end());
    temp_softmax_rows(y, y.size(), tau);
    return y;
}

std::vector<double> temp_softmax_backward(std::span<const double> y, std::span<const double> grad_y, double tau) {
    std::vector<double> g(grad_y.begin(), grad_y.end());
    temp_softmax_rows_backward(y, g, g.size(), tau);
    return g;
}

void temp_softmax_rows(std::span<double> data, std::size_t width, double tau) {
    require_tau(tau);
    if (width == 0 || data.size() % width != 0) throw ParameterError("softmax: row width does not divide data");
    for (std::size_t start = 0; start < data.size(); start += width) {
        double* row = data.data() + start;
        const double mx = *std::max_element(row, row + width);
        double sum = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            row[i] = std::exp((row[i] - mx) / tau);
            sum += row[i];
        }
        for (std::size_t i = 0; i < width; ++i) row[i] /= sum;
    }
}

// dx_i = (1/tau) y_i (g_i - sum_j g_j y_j)
void temp_softmax_rows_backward(std::span<const double> y, std::span<double> grad_inout, std::size_t width,
                                double tau) {
    require_tau(tau);
    if (y.size() != grad_inout.size() || width == 0 || y.size() % width != 0) {
        throw ParameterError("softmax backward: shape mismatch");
    }
    for (std::size_t start = 0; start < y.size(); start += width) {
        double dot = 0.0;
        for (std::size_t i = 0; i < width; ++i) dot += grad_inout[start + i] * y[start + i];
        for (std::size_t i = 0; i < width; ++i) {
            grad_inout[start + i] = y[start + i] * (grad_inout[start + i] - dot) / tau;
        }
    }
}

Tensor elu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.values()) v = elu(v);
    return y;
}

Tensor elu_backward(const Tensor& pre, const Tensor& grad_out) {
    require_same_dims(pre, grad_out, "elu_backward");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= elu_grad(pre[i]);
    return g;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.rank() != 2 || W.rank() != 2 || x.dim(1) != W.dim(1) || (!b.empty() && b.size() != W.dim(0))) {
        throw ParameterError("linear: shape mismatch x " + dims_to_string(x.dims()) + ", W " +
                             dims_to_string(W.dims()) + ", b " + dims_to_string(b.dims()));
    }
    const std::size_t rows = x.dim(0), in = x.dim(1), out = W.dim(0);
    Tensor y({rows, out});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * in;
        double* yr = y.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = W.data() + o * in;
            double acc = b.empty() ? 0.0 : b[o];
            for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
    return y;
}

void linear_backward_into(const Tensor& x, const Tensor& W, const Tensor& grad_out, Tensor* dx, Tensor& dW,
                          Tensor* db) {
    const std::size_t rows = x.dim(0), in = x.dim(1), out = W.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != rows || grad_out.dim(1) != out) {
        throw ParameterError("linear_backward: gradient shape " + dims_to_string(grad_out.dims()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * in;
        const double* gr = grad_out.data() + r * out;
        double* dxr = dx ? dx->data() + r * in : nullptr;
        for (std::size_t o = 0; o < out; ++o) {
            const double g = gr[o];
            if (g == 0.0) continue;
            double* dwr = dW.data() + o * in;
            const double* wr = W.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
            if (dxr)
                for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
            if (db) (*db)[o] += g;
        }
    }
}

LinearGrads linear_backward(const Tensor& x, const Tensor& W, const Tensor& grad_out, bool has_bias) {
    LinearGrads g{Tensor(x.dims()), Tensor(W.dims()), has_bias ? Tensor({W.dim(0)}) : Tensor()};
    linear_backward_into(x, W, grad_out, &g.dx, g.dW, has_bias ? &g.db : nullptr);
    return g;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache) {
    if (x.rank() == 0) throw ParameterError("layer_norm: scalar input");
    const std::size_t width = x.dims().back();
    if (gain.size() != width || bias.size() != width) {
        throw ParameterError("layer_norm: gain/bias length must equal last axis " + std::to_string(width));
    }
    const std::size_t rows = row_count(x, width);
    Tensor y(x.dims());
    if (cache) {
        cache->normalized = Tensor(x.dims());
        cache->inv_std.assign(rows, 0.0);
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * width;
        double mean = 0.0;
        for (std::size_t i = 0; i < width; ++i) mean += xr[i];
        mean /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t i = 0; i < width; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= static_cast<double>(width);
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t i = 0; i < width; ++i) {
            const double n = (xr[i] - mean) * inv_std;
            if (cache) cache->normalized[r * width + i] = n;
            y[r * width + i] = n * gain[i] + bias[i];
        }
        if (cache) cache->inv_std[r] = inv_std;
    }
    return y;
}

// dx = inv_std * (dn - mean(dn) - n * mean(dn * n)), dn = g * gain
LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& grad_out) {
    require_same_dims(cache.normalized, grad_out, "layer_norm_backward");
    const std::size_t width = gain.size();
    const std::size_t rows = cache.inv_std.size();
    LayerNormGrads g{Tensor(grad_out.dims()), Tensor({width}), Tensor({width})};
    std::vector<double> dn(width);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* n = cache.normalized.data() + r * width;
        const double* go = grad_out.data() + r * width;
        double mean_dn = 0.0, mean_dn_n = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            g.dgain[i] += go[i] * n[i];
            g.dbias[i] += go[i];
            dn[i] = go[i] * gain[i];
            mean_dn += dn[i];
            mean_dn_n += dn[i] * n[i];
        }
        mean_dn /= static_cast<double>(width);
        mean_dn_n /= static_cast<double>(width);
        for (std::size_t i = 0; i < width; ++i) {
            g.dx[r * width + i] = cache.inv_std[r] * (dn[i] - mean_dn - n[i] * mean_dn_n);
        }
    }
    return g;
}

Tensor mlp(const Tensor& x, const std::vector<LinearLayer>& layers, MlpCache* cache) {
    if (layers.empty()) throw ParameterError("mlp needs at least one layer");
    if (cache) {
        cache->inputs.clear();
        cache->pre_activation.clear();
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Tensor pre = linear(h, layers[i].W, layers[i].b);
        if (cache) {
            cache->inputs.push_back(h);
            cache->pre_activation.push_back(pre);
        }
        h = i + 1 < layers.size() ? elu(pre) : std::move(pre);
    }
    return h;
}

MlpGrads mlp_backward(const std::vector<LinearLayer>& layers, const MlpCache& cache, const Tensor& grad_out) {
    MlpGrads out;
    out.layers.resize(layers.size());
    Tensor g = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
        if (i + 1 < layers.size()) g = elu_backward(cache.pre_activation[i], g);
        auto lg = linear_backward(cache.inputs[i], layers[i].W, g, !layers[i].b.empty());
        out.layers[i] = {std::move(lg.dW), std::move(lg.db)};
        g = std::move(lg.dx);
    }
    out.dx = std::move(g);
    return out;
}

}  // namespace esi::nn
