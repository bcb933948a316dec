#pragma once

#include "esi/tensor.hpp"

namespace esi::nn {

// Single-head scaled dot-product self-attention over the rows of x (seq_len x d_in).
// W_Q, W_K: d x d_in; W_V: d_v x d_in. Output: seq_len x d_v.
struct AttentionCache {
    Tensor x;
    Tensor q;
    Tensor k;
    Tensor v;
    Tensor weights;  // row-softmaxed scores, seq_len x seq_len
};

Tensor attention(const Tensor& x, const Tensor& W_Q, const Tensor& W_K, const Tensor& W_V,
                 AttentionCache* cache = nullptr);

struct AttentionGrads {
    Tensor dx;
    Tensor dW_Q;
    Tensor dW_K;
    Tensor dW_V;
};

AttentionGrads attention_backward(const AttentionCache& cache, const Tensor& W_Q, const Tensor& W_K,
                                  const Tensor& W_V, const Tensor& grad_out);

}  // namespace esi::nn
