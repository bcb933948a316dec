#include "esi/fair/refine.hpp"

#include "esi/error.hpp"
#include "esi/nn/conv.hpp"
#include "esi/nn/fft.hpp"

namespace esi::fair {
namespace {

void require_grid(const Tensor& P, const char* what) {
    if (P.rank() != 3) throw ParameterError(std::string(what) + ": expected N_c x N_p x l grid, got " +
                                            dims_to_string(P.dims()));
}

void require_weights(std::span<const Tensor> w) {
    if (w.size() != kPatchParamCount) throw ParameterError("patch_refine: wrong number of weight tensors");
}

Tensor embed_tokens(std::span<const double> tokens, const Tensor& w, const Tensor& b) {
    const std::size_t l = tokens.size(), d = w.size();
    Tensor e({l, d});
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t c = 0; c < d; ++c) e(t, c) = tokens[t] * w[c] + b[c];
    return e;
}

}  // namespace

Tensor spectral_refine(const Tensor& P, double tau, SpectralMode mode, SpectralCache* cache) {
    require_grid(P, "spectral_refine");
    const std::size_t l = P.dim(2), rows = P.size() / l;
    if (!nn::is_power_of_two(l)) throw ParameterError("spectral_refine: patch length must be a power of two");
    if (!(tau > 0.0)) throw ParameterError("spectral_refine: tau must be > 0");
    Tensor out(P.dims());
    if (cache) {
        cache->raw_re = Tensor(P.dims());
        cache->raw_im = Tensor(P.dims());
        cache->soft_re = Tensor(P.dims());
        cache->soft_im = Tensor(P.dims());
        cache->imag_energy = 0.0;
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const std::span<const double> patch(P.data() + r * l, l);
        auto spec = nn::fft(patch);
        auto soft_re = nn::temp_softmax(spec.re, tau);
        auto soft_im = nn::temp_softmax(spec.im, tau);
        nn::ComplexPair refined;
        if (mode == SpectralMode::replace) {
            refined = {soft_re, soft_im};
        } else {
            refined = {std::vector<double>(l), std::vector<double>(l)};
            for (std::size_t k = 0; k < l; ++k) {
                refined.re[k] = spec.re[k] * soft_re[k];
                refined.im[k] = spec.im[k] * soft_im[k];
            }
        }
        const auto back = nn::ifft(refined);
        std::copy(back.real.begin(), back.real.end(), out.data() + r * l);
        if (cache) {
            std::copy(spec.re.begin(), spec.re.end(), cache->raw_re.data() + r * l);
            std::copy(spec.im.begin(), spec.im.end(), cache->raw_im.data() + r * l);
            std::copy(soft_re.begin(), soft_re.end(), cache->soft_re.data() + r * l);
            std::copy(soft_im.begin(), soft_im.end(), cache->soft_im.data() + r * l);
            cache->imag_energy += back.imag_energy;
        }
    }
    return out;
}

Tensor spectral_refine_backward(const SpectralCache& cache, double tau, SpectralMode mode, const Tensor& grad) {
    require_same_dims(cache.soft_re, grad, "spectral_refine_backward");
    const std::size_t l = grad.dim(2), rows = grad.size() / l;
    Tensor dP(grad.dims());
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * l;
        auto dspec = nn::ifft_backward(std::span<const double>(grad.data() + off, l));
        const std::span<const double> sre(cache.soft_re.data() + off, l), sim(cache.soft_im.data() + off, l);
        nn::ComplexPair draw;
        if (mode == SpectralMode::replace) {
            draw = {nn::temp_softmax_backward(sre, dspec.re, tau), nn::temp_softmax_backward(sim, dspec.im, tau)};
        } else {
            // y = c * softmax(c): dc = g * s + softmax_backward(s, g * c)
            std::vector<double> gre(l), gim(l);
            for (std::size_t k = 0; k < l; ++k) {
                gre[k] = dspec.re[k] * cache.raw_re[off + k];
                gim[k] = dspec.im[k] * cache.raw_im[off + k];
            }
            draw = {nn::temp_softmax_backward(sre, gre, tau), nn::temp_softmax_backward(sim, gim, tau)};
            for (std::size_t k = 0; k < l; ++k) {
                draw.re[k] += dspec.re[k] * sre[k];
                draw.im[k] += dspec.im[k] * sim[k];
            }
        }
        const auto dx = nn::fft_backward(draw);
        std::copy(dx.begin(), dx.end(), dP.data() + off);
    }
    return dP;
}

Tensor temporal_refine(const Tensor& P, double tau) {
    require_grid(P, "temporal_refine");
    Tensor out = P;
    nn::temp_softmax_rows(out.values(), P.dim(2), tau);
    return out;
}

Tensor temporal_refine_backward(const Tensor& refined, double tau, const Tensor& grad) {
    require_same_dims(refined, grad, "temporal_refine_backward");
    Tensor g = grad;
    nn::temp_softmax_rows_backward(refined.values(), g.values(), refined.dim(2), tau);
    return g;
}

Tensor fuse(const Tensor& spectral, const Tensor& temporal, double alpha) {
    require_same_dims(spectral, temporal, "fuse");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("fuse: alpha must be in [0, 1]");
    Tensor out(spectral.dims());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * spectral[i] + (1.0 - alpha) * temporal[i];
    return out;
}

double patch_energy(const Tensor& P, std::size_t channel, std::size_t patch) {
    const std::size_t l = P.dim(2);
    const double* p = P.data() + (channel * P.dim(1) + patch) * l;
    double e = 0.0;
    for (std::size_t k = 0; k < l; ++k) e += p[k] * p[k];
    return e;
}

std::size_t select_key_patch(const Tensor& P, std::size_t channel) {
    require_grid(P, "select_key_patch");
    if (P.dim(1) == 0) throw ParameterError("select_key_patch: no patches");
    if (channel >= P.dim(0)) throw ParameterError("select_key_patch: channel out of range");
    std::size_t best = 0;
    double best_e = patch_energy(P, channel, 0);
    for (std::size_t j = 1; j < P.dim(1); ++j) {
        const double e = patch_energy(P, channel, j);
        if (e > best_e) {
            best_e = e;
            best = j;
        }
    }
    return best;
}

const char* patch_param_name(PatchParam p) {
    static constexpr const char* names[] = {"embed_w", "embed_b",    "w_q",        "w_k",       "w_v",
                                            "out_w",   "out_b",      "conv_kernel", "conv_bias", "conv_gain",
                                            "conv_shift", "tconv_kernel", "tconv_bias", "tconv_gain", "tconv_shift"};
    return names[p];
}

std::vector<Dims> patch_param_dims(std::size_t l, std::size_t d, std::size_t k, std::size_t D) {
    return {{d}, {d}, {d, d}, {d, d}, {d, d}, {d}, {1}, {k, k, 2 * l, D}, {D}, {D}, {D}, {k, k, l, D}, {l}, {l}, {l}};
}

std::vector<double> key_patch_summary(std::span<const double> key_patch, std::span<const Tensor> w) {
    require_weights(w);
    const Tensor e = embed_tokens(key_patch, w[kEmbedW], w[kEmbedB]);
    const Tensor att = nn::attention(e, w[kQuery], w[kKey], w[kValue]);
    const std::size_t l = key_patch.size(), d = w[kEmbedW].size();
    std::vector<double> summary(l);
    for (std::size_t t = 0; t < l; ++t) {
        double acc = w[kOutB][0];
        for (std::size_t c = 0; c < d; ++c) acc += att(t, c) * w[kOutW][c];
        summary[t] = acc;
    }
    return summary;
}

Tensor patch_refine(const Tensor& PL, std::span<const Tensor> w, PatchRefineCache* cache) {
    require_grid(PL, "patch_refine");
    require_weights(w);
    const std::size_t nc = PL.dim(0), np = PL.dim(1), l = PL.dim(2);
    const std::size_t d = w[kEmbedW].size();
    const std::size_t k = w[kConvKernel].dim(0);
    if (w[kConvKernel].dim(2) != 2 * l || w[kTconvKernel].dim(2) != l || w[kTconvBias].size() != l) {
        throw ParameterError("patch_refine: weights do not match patch length " + std::to_string(l));
    }

    Tensor summary({nc, l});
    if (cache) {
        cache->input = PL;
        cache->key_index.assign(nc, 0);
        cache->attention.assign(nc, {});
        cache->embedded.assign(nc, {});
        cache->attended.assign(nc, {});
    }
    for (std::size_t i = 0; i < nc; ++i) {
        const std::size_t p = select_key_patch(PL, i);
        const std::span<const double> tokens(PL.data() + (i * np + p) * l, l);
        Tensor e = embed_tokens(tokens, w[kEmbedW], w[kEmbedB]);
        nn::AttentionCache ac;
        Tensor att = nn::attention(e, w[kQuery], w[kKey], w[kValue], cache ? &ac : nullptr);
        for (std::size_t t = 0; t < l; ++t) {
            double acc = w[kOutB][0];
            for (std::size_t c = 0; c < d; ++c) acc += att(t, c) * w[kOutW][c];
            summary(i, t) = acc;
        }
        if (cache) {
            cache->key_index[i] = p;
            cache->attention[i] = std::move(ac);
            cache->embedded[i] = std::move(e);
            cache->attended[i] = std::move(att);
        }
    }

    Tensor augmented({nc, np, 2 * l});
    for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = 0; j < np; ++j)
            for (std::size_t t = 0; t < l; ++t) {
                augmented(i, j, t) = PL(i, j, t);
                augmented(i, j, l + t) = summary(i, t);
            }

    const auto geom = nn::ConvGeometry::same(k, k);
    Tensor conv_pre = nn::conv2d(augmented, w[kConvKernel], w[kConvBias], geom);
    Tensor conv_out = nn::layer_norm(nn::elu(conv_pre), w[kConvGain], w[kConvShift], cache ? &cache->conv_norm : nullptr);
    Tensor tconv_pre = nn::transpose_conv2d(conv_out, w[kTconvKernel], w[kTconvBias], geom);
    Tensor out = nn::layer_norm(nn::elu(tconv_pre), w[kTconvGain], w[kTconvShift], cache ? &cache->tconv_norm : nullptr);
    if (cache) {
        cache->summary = std::move(summary);
        cache->augmented = std::move(augmented);
        cache->conv_pre = std::move(conv_pre);
        cache->conv_out = std::move(conv_out);
        cache->tconv_pre = std::move(tconv_pre);
    }
    return out;
}

Tensor patch_refine_backward(const PatchRefineCache& cache, std::span<const Tensor> w, const Tensor& grad,
                             std::span<Tensor> dw, bool need_input_grad) {
    require_weights(w);
    if (dw.size() != kPatchParamCount) throw ParameterError("patch_refine_backward: wrong gradient count");
    const std::size_t nc = cache.input.dim(0), np = cache.input.dim(1), l = cache.input.dim(2);
    const std::size_t d = w[kEmbedW].size();
    const std::size_t k = w[kConvKernel].dim(0);
    const auto geom = nn::ConvGeometry::same(k, k);

    auto tln = nn::layer_norm_backward(cache.tconv_norm, w[kTconvGain], grad);
    dw[kTconvGain] += tln.dgain;
    dw[kTconvShift] += tln.dbias;
    const Tensor dtconv = nn::elu_backward(cache.tconv_pre, tln.dx);
    auto tg = nn::transpose_conv2d_backward(cache.conv_out, w[kTconvKernel], geom, dtconv, true);
    dw[kTconvKernel] += tg.dkernel;
    dw[kTconvBias] += tg.dbias;

    auto cln = nn::layer_norm_backward(cache.conv_norm, w[kConvGain], tg.dx);
    dw[kConvGain] += cln.dgain;
    dw[kConvShift] += cln.dbias;
    const Tensor dconv = nn::elu_backward(cache.conv_pre, cln.dx);
    auto cg = nn::conv2d_backward(cache.augmented, w[kConvKernel], geom, dconv, true);
    dw[kConvKernel] += cg.dkernel;
    dw[kConvBias] += cg.dbias;

    Tensor dPL;
    if (need_input_grad) {
        dPL = Tensor(cache.input.dims());
        for (std::size_t i = 0; i < nc; ++i)
            for (std::size_t j = 0; j < np; ++j)
                for (std::size_t t = 0; t < l; ++t) dPL(i, j, t) = cg.dx(i, j, t);
    }

    for (std::size_t i = 0; i < nc; ++i) {
        std::vector<double> dsum(l, 0.0);
        for (std::size_t j = 0; j < np; ++j)
            for (std::size_t t = 0; t < l; ++t) dsum[t] += cg.dx(i, j, l + t);

        const Tensor& att = cache.attended[i];
        Tensor datt({l, d});
        for (std::size_t t = 0; t < l; ++t) {
            dw[kOutB][0] += dsum[t];
            for (std::size_t c = 0; c < d; ++c) {
                dw[kOutW][c] += dsum[t] * att(t, c);
                datt(t, c) = dsum[t] * w[kOutW][c];
            }
        }
        auto ag = nn::attention_backward(cache.attention[i], w[kQuery], w[kKey], w[kValue], datt);
        dw[kQuery] += ag.dW_Q;
        dw[kKey] += ag.dW_K;
        dw[kValue] += ag.dW_V;

        const std::size_t p = cache.key_index[i];
        for (std::size_t t = 0; t < l; ++t) {
            const double token = cache.input(i, p, t);
            double dtoken = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double de = ag.dx(t, c);
                dw[kEmbedW][c] += token * de;
                dw[kEmbedB][c] += de;
                dtoken += de * w[kEmbedW][c];
            }
            if (need_input_grad) dPL(i, p, t) += dtoken;
        }
    }
    return dPL;
}

}  // namespace esi::fair
