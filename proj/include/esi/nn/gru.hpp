#pragma once

#include <cstddef>
#include <vector>

#include "esi/tensor.hpp"

namespace esi::nn {

// Gate blocks are stacked in the order [reset r, update z, candidate n]:
//   r = sigma(W_ir x + b_ir + W_hr h + b_hr)
//   z = sigma(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h
struct GruParams {
    Tensor W_ih;  // 3h x d_in
    Tensor W_hh;  // 3h x h
    Tensor b_ih;  // 3h
    Tensor b_hh;  // 3h

    static GruParams zeros(std::size_t d_in, std::size_t hidden);
    std::size_t hidden() const { return W_hh.dim(1); }
    std::size_t input_dim() const { return W_ih.dim(1); }
};

struct GruCache {
    Tensor x;       // T x d_in
    Tensor h;       // (T + 1) x h, row 0 is the zero initial state
    Tensor r, z, n; // T x h
    Tensor gh_n;    // T x h, W_hn h + b_hn
};

// Runs over the rows of x (T x d_in) from a zero state; returns T x h.
Tensor gru(const Tensor& x, const GruParams& p, GruCache* cache = nullptr);

struct GruGrads {
    Tensor dx;
    GruParams dparams;
};

GruGrads gru_backward(const GruCache& cache, const GruParams& p, const Tensor& grad_h);

struct BiGruParams {
    GruParams forward;
    GruParams backward;
};

struct BiGruCache {
    GruCache forward;
    GruCache backward;  // over the time-reversed sequence
};

// Output row t = [forward h_t, backward h_t]; T x 2h.
Tensor bigru(const Tensor& x, const BiGruParams& p, BiGruCache* cache = nullptr);

struct BiGruGrads {
    Tensor dx;
    BiGruParams dparams;
};

BiGruGrads bigru_backward(const BiGruCache& cache, const BiGruParams& p, const Tensor& grad_out);

Tensor reverse_rows(const Tensor& x);

}  // namespace esi::nn
