#include "esi/nn/attention.hpp"

#include <cmath>

#include "esi/error.hpp"
#include "esi/nn/ops.hpp"

namespace esi::nn {

Tensor attention(const Tensor& x, const Tensor& W_Q, const Tensor& W_K, const Tensor& W_V, AttentionCache* cache) {
    if (x.rank() != 2 || W_Q.rank() != 2 || W_K.rank() != 2 || W_V.rank() != 2 || W_Q.dims() != W_K.dims() ||
        W_Q.dim(1) != x.dim(1) || W_V.dim(1) != x.dim(1) || W_Q.dim(0) == 0) {
        throw ParameterError("attention: shape mismatch x " + dims_to_string(x.dims()) + ", W_Q " +
                             dims_to_string(W_Q.dims()) + ", W_K " + dims_to_string(W_K.dims()) + ", W_V " +
                             dims_to_string(W_V.dims()));
    }
    const Tensor none;
    Tensor q = linear(x, W_Q, none);
    Tensor k = linear(x, W_K, none);
    Tensor v = linear(x, W_V, none);
    const std::size_t n = x.dim(0), d = W_Q.dim(0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor scores({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += q(i, c) * k(j, c);
            scores(i, j) = acc * scale;
        }
    temp_softmax_rows(scores.values(), n, 1.0);
    Tensor out = matmul(scores, v);
    if (cache) *cache = {x, std::move(q), std::move(k), std::move(v), std::move(scores)};
    return out;
}

AttentionGrads attention_backward(const AttentionCache& cache, const Tensor& W_Q, const Tensor& W_K,
                                  const Tensor& W_V, const Tensor& grad_out) {
    const std::size_t n = cache.x.dim(0), d = W_Q.dim(0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    if (grad_out.rank() != 2 || grad_out.dim(0) != n || grad_out.dim(1) != W_V.dim(0)) {
        throw ParameterError("attention_backward: gradient shape " + dims_to_string(grad_out.dims()));
    }
    Tensor dv = matmul(transpose(cache.weights), grad_out);
    Tensor dscores = matmul(grad_out, transpose(cache.v));
    temp_softmax_rows_backward(cache.weights.values(), dscores.values(), n, 1.0);
    Tensor dq = matmul(dscores, cache.k) * scale;
    Tensor dk = matmul(transpose(dscores), cache.q) * scale;

    AttentionGrads g{Tensor(cache.x.dims()), Tensor(W_Q.dims()), Tensor(W_K.dims()), Tensor(W_V.dims())};
    linear_backward_into(cache.x, W_Q, dq, &g.dx, g.dW_Q, nullptr);
    linear_backward_into(cache.x, W_K, dk, &g.dx, g.dW_K, nullptr);
    linear_backward_into(cache.x, W_V, dv, &g.dx, g.dW_V, nullptr);
    return g;
}

}  // namespace esi::nn
