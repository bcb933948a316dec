#include "esi/nn/gru.hpp"

#include <algorithm>
#include <cmath>

#include "esi/error.hpp"
#include "esi/nn/ops.hpp"

namespace esi::nn {
namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void validate(const Tensor& x, const GruParams& p) {
    const std::size_t h = p.W_hh.rank() == 2 ? p.W_hh.dim(1) : 0;
    if (x.rank() != 2 || x.dim(0) == 0 || p.W_ih.rank() != 2 || p.W_ih.dim(0) != 3 * h || p.W_ih.dim(1) != x.dim(1) ||
        p.W_hh.dim(0) != 3 * h || p.b_ih.size() != 3 * h || p.b_hh.size() != 3 * h || h == 0) {
        throw ParameterError("gru: shape mismatch, x " + dims_to_string(x.dims()) + ", W_ih " +
                             dims_to_string(p.W_ih.dims()) + ", W_hh " + dims_to_string(p.W_hh.dims()));
    }
}

}  // namespace

GruParams GruParams::zeros(std::size_t d_in, std::size_t hidden) {
    return {Tensor({3 * hidden, d_in}), Tensor({3 * hidden, hidden}), Tensor({3 * hidden}), Tensor({3 * hidden})};
}

Tensor gru(const Tensor& x, const GruParams& p, GruCache* cache) {
    validate(x, p);
    const std::size_t T = x.dim(0), H = p.hidden();
    const Tensor gi = linear(x, p.W_ih, p.b_ih);  // T x 3H
    Tensor hs({T + 1, H});
    Tensor r({T, H}), z({T, H}), n({T, H}), ghn({T, H});
    std::vector<double> gh(3 * H);
    for (std::size_t t = 0; t < T; ++t) {
        const double* hp = hs.data() + t * H;
        for (std::size_t o = 0; o < 3 * H; ++o) {
            const double* w = p.W_hh.data() + o * H;
            double acc = p.b_hh[o];
            for (std::size_t i = 0; i < H; ++i) acc += w[i] * hp[i];
            gh[o] = acc;
        }
        const double* g = gi.data() + t * 3 * H;
        double* hn = hs.data() + (t + 1) * H;
        for (std::size_t j = 0; j < H; ++j) {
            const double rv = sigmoid(g[j] + gh[j]);
            const double zv = sigmoid(g[H + j] + gh[H + j]);
            const double nv = std::tanh(g[2 * H + j] + rv * gh[2 * H + j]);
            r(t, j) = rv;
            z(t, j) = zv;
            n(t, j) = nv;
            ghn(t, j) = gh[2 * H + j];
            hn[j] = (1.0 - zv) * nv + zv * hp[j];
        }
    }
    Tensor out({T, H});
    std::copy(hs.data() + H, hs.data() + (T + 1) * H, out.data());
    if (cache) *cache = {x, std::move(hs), std::move(r), std::move(z), std::move(n), std::move(ghn)};
    return out;
}

GruGrads gru_backward(const GruCache& cache, const GruParams& p, const Tensor& grad_h) {
    const std::size_t T = cache.x.dim(0), H = p.hidden(), D = p.input_dim();
    if (grad_h.rank() != 2 || grad_h.dim(0) != T || grad_h.dim(1) != H) {
        throw ParameterError("gru_backward: gradient shape " + dims_to_string(grad_h.dims()));
    }
    GruGrads out{Tensor({T, D}), GruParams::zeros(D, H)};
    Tensor dgi({T, 3 * H});
    std::vector<double> dh(H, 0.0), dgh(3 * H), dh_prev(H);
    for (std::size_t t = T; t-- > 0;) {
        const double* hp = cache.h.data() + t * H;
        for (std::size_t j = 0; j < H; ++j) dh[j] += grad_h(t, j);
        double* dg = dgi.data() + t * 3 * H;
        for (std::size_t j = 0; j < H; ++j) {
            const double rv = cache.r(t, j), zv = cache.z(t, j), nv = cache.n(t, j);
            const double dn = dh[j] * (1.0 - zv);
            const double dz = dh[j] * (hp[j] - nv);
            dh_prev[j] = dh[j] * zv;
            const double dpre_n = dn * (1.0 - nv * nv);
            const double dr = dpre_n * cache.gh_n(t, j);
            const double dpre_z = dz * zv * (1.0 - zv);
            const double dpre_r = dr * rv * (1.0 - rv);
            dg[j] = dpre_r;
            dg[H + j] = dpre_z;
            dg[2 * H + j] = dpre_n;
            dgh[j] = dpre_r;
            dgh[H + j] = dpre_z;
            dgh[2 * H + j] = dpre_n * rv;
        }
        for (std::size_t o = 0; o < 3 * H; ++o) {
            const double g = dgh[o];
            out.dparams.b_hh[o] += g;
            if (g == 0.0) continue;
            const double* w = p.W_hh.data() + o * H;
            double* dw = out.dparams.W_hh.data() + o * H;
            for (std::size_t i = 0; i < H; ++i) {
                dw[i] += g * hp[i];
                dh_prev[i] += g * w[i];
            }
        }
        dh.swap(dh_prev);
    }
    linear_backward_into(cache.x, p.W_ih, dgi, &out.dx, out.dparams.W_ih, &out.dparams.b_ih);
    return out;
}

Tensor reverse_rows(const Tensor& x) {
    const std::size_t T = x.dim(0), W = x.size() / std::max<std::size_t>(T, 1);
    Tensor out(x.dims());
    for (std::size_t t = 0; t < T; ++t)
        std::copy(x.data() + t * W, x.data() + (t + 1) * W, out.data() + (T - 1 - t) * W);
    return out;
}

Tensor bigru(const Tensor& x, const BiGruParams& p, BiGruCache* cache) {
    if (p.forward.hidden() != p.backward.hidden()) throw ParameterError("bigru: direction hidden sizes differ");
    const Tensor fwd = gru(x, p.forward, cache ? &cache->forward : nullptr);
    const Tensor bwd = reverse_rows(gru(reverse_rows(x), p.backward, cache ? &cache->backward : nullptr));
    const std::size_t T = x.dim(0), H = p.forward.hidden();
    Tensor out({T, 2 * H});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < H; ++j) {
            out(t, j) = fwd(t, j);
            out(t, H + j) = bwd(t, j);
        }
    return out;
}

BiGruGrads bigru_backward(const BiGruCache& cache, const BiGruParams& p, const Tensor& grad_out) {
    const std::size_t T = cache.forward.x.dim(0), H = p.forward.hidden();
    if (grad_out.rank() != 2 || grad_out.dim(0) != T || grad_out.dim(1) != 2 * H) {
        throw ParameterError("bigru_backward: gradient shape " + dims_to_string(grad_out.dims()));
    }
    Tensor gf({T, H}), gb_rev({T, H});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < H; ++j) {
            gf(t, j) = grad_out(t, j);
            gb_rev(T - 1 - t, j) = grad_out(t, H + j);
        }
    auto f = gru_backward(cache.forward, p.forward, gf);
    auto b = gru_backward(cache.backward, p.backward, gb_rev);
    Tensor dx = f.dx + reverse_rows(b.dx);
    return {std::move(dx), {std::move(f.dparams), std::move(b.dparams)}};
}

}  // namespace esi::nn
