#include "grad_suite.hpp"

#include <algorithm>
#include <cmath>

#include "esi/fair/refine.hpp"
#include "esi/nn/attention.hpp"
#include "esi/nn/conv.hpp"
#include "esi/nn/fft.hpp"
#include "esi/nn/grad_check.hpp"
#include "esi/nn/gru.hpp"
#include "esi/nn/ops.hpp"
#include "esi/rng.hpp"

namespace esi::checks {

namespace {

constexpr double kStep = 1e-6;

Tensor random_tensor(const Dims& dims, Rng& rng, double scale = 1.0) {
    Tensor t(dims);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

Tensor to_tensor(const std::vector<double>& v) { return Tensor({v.size()}, v); }

// grad_check of L = <proj, fwd(x)> where vjp(x, proj) is the analytic dL/dx.
template <class F, class B>
double vjp_error(F fwd, B vjp, const Tensor& x, Rng& rng) {
    const Tensor proj = random_tensor(fwd(x).dims(), rng);
    nn::DifferentiableFn f = [&](const Tensor& in, Tensor* grad) {
        const Tensor y = fwd(in);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * proj[i];
        if (grad) *grad = vjp(in, proj);
        return acc;
    };
    return nn::grad_check(f, x, kStep);
}

}  // namespace

std::vector<GradResult> primitive_grad_errors() {
    Rng rng(2718);
    std::vector<GradResult> out;
    auto add = [&](std::string name, double err) { out.push_back({std::move(name), err}); };

    add("fft", vjp_error(
                   [](const Tensor& x) {
                       const auto s = nn::fft(x.values());
                       std::vector<double> all(s.re);
                       all.insert(all.end(), s.im.begin(), s.im.end());
                       return to_tensor(all);
                   },
                   [](const Tensor&, const Tensor& g) {
                       const auto v = g.values();
                       nn::ComplexPair gp{{v.begin(), v.begin() + 16}, {v.begin() + 16, v.end()}};
                       return to_tensor(nn::fft_backward(gp));
                   },
                   random_tensor({16}, rng), rng));
    add("ifft", vjp_error(
                    [](const Tensor& z) {
                        const auto v = z.values();
                        return to_tensor(nn::ifft({{v.begin(), v.begin() + 16}, {v.begin() + 16, v.end()}}).real);
                    },
                    [](const Tensor&, const Tensor& g) {
                        const auto b = nn::ifft_backward(g.values());
                        std::vector<double> all(b.re);
                        all.insert(all.end(), b.im.begin(), b.im.end());
                        return to_tensor(all);
                    },
                    random_tensor({32}, rng), rng));
    add("temp_softmax", vjp_error([](const Tensor& x) { return to_tensor(nn::temp_softmax(x.values(), 0.1)); },
                                  [](const Tensor& x, const Tensor& g) {
                                      return to_tensor(
                                          nn::temp_softmax_backward(nn::temp_softmax(x.values(), 0.1), g.values(), 0.1));
                                  },
                                  random_tensor({9}, rng, 0.1), rng));
    add("elu", vjp_error([](const Tensor& x) { return nn::elu(x); },
                         [](const Tensor& x, const Tensor& g) { return nn::elu_backward(x, g); },
                         random_tensor({4, 5}, rng), rng));

    {
        const Tensor x = random_tensor({4, 5}, rng), W = random_tensor({3, 5}, rng), b = random_tensor({3}, rng);
        double e = vjp_error([&](const Tensor& t) { return nn::linear(t, W, b); },
                             [&](const Tensor& t, const Tensor& g) { return nn::linear_backward(t, W, g, true).dx; }, x,
                             rng);
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::linear(x, t, b); },
                                  [&](const Tensor& t, const Tensor& g) { return nn::linear_backward(x, t, g, true).dW; },
                                  W, rng));
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::linear(x, W, t); },
                                  [&](const Tensor&, const Tensor& g) { return nn::linear_backward(x, W, g, true).db; },
                                  b, rng));
        add("linear", e);

        const Tensor gain = random_tensor({5}, rng), shift = random_tensor({5}, rng);
        auto ln = [&](const Tensor& xx, const Tensor& gg, const Tensor& g) {
            nn::LayerNormCache cache;
            nn::layer_norm(xx, gg, shift, &cache);
            return nn::layer_norm_backward(cache, gg, g);
        };
        e = vjp_error([&](const Tensor& t) { return nn::layer_norm(t, gain, shift); },
                      [&](const Tensor& t, const Tensor& g) { return ln(t, gain, g).dx; }, x, rng);
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::layer_norm(x, t, shift); },
                                  [&](const Tensor& t, const Tensor& g) { return ln(x, t, g).dgain; }, gain, rng));
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::layer_norm(x, gain, t); },
                                  [&](const Tensor&, const Tensor& g) { return ln(x, gain, g).dbias; }, shift, rng));
        add("layer_norm", e);

        std::vector<nn::LinearLayer> layers{{random_tensor({6, 5}, rng), random_tensor({6}, rng)},
                                            {random_tensor({3, 6}, rng), random_tensor({3}, rng)}};
        add("mlp", vjp_error([&](const Tensor& t) { return nn::mlp(t, layers); },
                             [&](const Tensor& t, const Tensor& g) {
                                 nn::MlpCache cache;
                                 nn::mlp(t, layers, &cache);
                                 return nn::mlp_backward(layers, cache, g).dx;
                             },
                             x, rng));
    }

    {
        const Tensor x = random_tensor({5, 3}, rng);
        const Tensor Wq = random_tensor({4, 3}, rng), Wk = random_tensor({4, 3}, rng), Wv = random_tensor({2, 3}, rng);
        auto grads = [&](const Tensor& xx, const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& g) {
            nn::AttentionCache cache;
            nn::attention(xx, q, k, v, &cache);
            return nn::attention_backward(cache, q, k, v, g);
        };
        double e = vjp_error([&](const Tensor& t) { return nn::attention(t, Wq, Wk, Wv); },
                             [&](const Tensor& t, const Tensor& g) { return grads(t, Wq, Wk, Wv, g).dx; }, x, rng);
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::attention(x, t, Wk, Wv); },
                                  [&](const Tensor& t, const Tensor& g) { return grads(x, t, Wk, Wv, g).dW_Q; }, Wq, rng));
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::attention(x, Wq, t, Wv); },
                                  [&](const Tensor& t, const Tensor& g) { return grads(x, Wq, t, Wv, g).dW_K; }, Wk, rng));
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::attention(x, Wq, Wk, t); },
                                  [&](const Tensor& t, const Tensor& g) { return grads(x, Wq, Wk, t, g).dW_V; }, Wv, rng));
        add("attention", e);
    }

    {
        const nn::ConvGeometry g{1, 1, 1, 1};
        const Tensor x = random_tensor({4, 5, 2}, rng), k = random_tensor({3, 3, 2, 3}, rng), b = random_tensor({3}, rng);
        double e = vjp_error([&](const Tensor& t) { return nn::conv2d(t, k, b, g); },
                             [&](const Tensor& t, const Tensor& gr) { return nn::conv2d_backward(t, k, g, gr, true).dx; },
                             x, rng);
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::conv2d(x, t, b, g); },
                                  [&](const Tensor& t, const Tensor& gr) {
                                      return nn::conv2d_backward(x, t, g, gr, true).dkernel;
                                  },
                                  k, rng));
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::conv2d(x, k, t, g); },
                                  [&](const Tensor&, const Tensor& gr) {
                                      return nn::conv2d_backward(x, k, g, gr, true).dbias;
                                  },
                                  b, rng));
        add("conv2d", e);

        const Tensor y = random_tensor({4, 5, 3}, rng), tb = random_tensor({2}, rng);
        e = vjp_error([&](const Tensor& t) { return nn::transpose_conv2d(t, k, tb, g); },
                      [&](const Tensor& t, const Tensor& gr) {
                          return nn::transpose_conv2d_backward(t, k, g, gr, true).dx;
                      },
                      y, rng);
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::transpose_conv2d(y, t, tb, g); },
                                  [&](const Tensor& t, const Tensor& gr) {
                                      return nn::transpose_conv2d_backward(y, t, g, gr, true).dkernel;
                                  },
                                  k, rng));
        e = std::max(e, vjp_error([&](const Tensor& t) { return nn::transpose_conv2d(y, k, t, g); },
                                  [&](const Tensor&, const Tensor& gr) {
                                      return nn::transpose_conv2d_backward(y, k, g, gr, true).dbias;
                                  },
                                  tb, rng));
        add("transpose_conv2d", e);
    }

    {
        nn::BiGruParams p{nn::GruParams::zeros(3, 4), nn::GruParams::zeros(3, 4)};
        for (nn::GruParams* g : {&p.forward, &p.backward})
            for (Tensor* t : {&g->W_ih, &g->W_hh, &g->b_ih, &g->b_hh}) *t = random_tensor(t->dims(), rng, 0.5);
        const Tensor x = random_tensor({6, 3}, rng);
        double e = vjp_error([&](const Tensor& t) { return nn::gru(t, p.forward); },
                             [&](const Tensor& t, const Tensor& g) {
                                 nn::GruCache cache;
                                 nn::gru(t, p.forward, &cache);
                                 return nn::gru_backward(cache, p.forward, g).dx;
                             },
                             x, rng);
        for (int which = 0; which < 4; ++which) {
            auto member = [which](nn::GruParams& q) -> Tensor& {
                return which == 0 ? q.W_ih : which == 1 ? q.W_hh : which == 2 ? q.b_ih : q.b_hh;
            };
            e = std::max(e, vjp_error(
                                [&](const Tensor& t) {
                                    nn::GruParams q = p.forward;
                                    member(q) = t;
                                    return nn::gru(x, q);
                                },
                                [&](const Tensor& t, const Tensor& g) {
                                    nn::GruParams q = p.forward;
                                    member(q) = t;
                                    nn::GruCache cache;
                                    nn::gru(x, q, &cache);
                                    auto d = nn::gru_backward(cache, q, g);
                                    return member(d.dparams);
                                },
                                member(p.forward), rng));
        }
        add("gru", e);
        add("bigru", vjp_error([&](const Tensor& t) { return nn::bigru(t, p); },
                               [&](const Tensor& t, const Tensor& g) {
                                   nn::BiGruCache cache;
                                   nn::bigru(t, p, &cache);
                                   return nn::bigru_backward(cache, p, g).dx;
                               },
                               x, rng));
    }

    {
        const Tensor P = random_tensor({3, 4, 8}, rng, 0.3);
        for (auto mode : {fair::SpectralMode::replace, fair::SpectralMode::reweight}) {
            add(std::string("spectral_refine/") + fair::to_string(mode),
                vjp_error([&](const Tensor& x) { return fair::spectral_refine(x, 0.5, mode); },
                          [&](const Tensor& x, const Tensor& g) {
                              fair::SpectralCache cache;
                              fair::spectral_refine(x, 0.5, mode, &cache);
                              return fair::spectral_refine_backward(cache, 0.5, mode, g);
                          },
                          P, rng));
        }
        add("temporal_refine", vjp_error([](const Tensor& x) { return fair::temporal_refine(x, 0.3); },
                                         [](const Tensor& x, const Tensor& g) {
                                             return fair::temporal_refine_backward(fair::temporal_refine(x, 0.3), 0.3, g);
                                         },
                                         P, rng));

        std::vector<Tensor> w;
        for (const auto& dims : fair::patch_param_dims(8, 4, 3, 16)) w.push_back(random_tensor(dims, rng, 0.4));
        for (std::size_t i : {std::size_t{fair::kConvGain}, std::size_t{fair::kTconvGain}})
            for (double& v : w[i].values()) v += 1.0;
        const Tensor Pp = random_tensor({3, 4, 8}, rng, 0.5);
        const Tensor proj = random_tensor(Pp.dims(), rng);
        auto loss = [&](const Tensor& x) {
            const Tensor y = fair::patch_refine(x, w);
            double acc = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * proj[i];
            return acc;
        };
        auto grads = [&](const Tensor& x, bool need_input) {
            fair::PatchRefineCache cache;
            fair::patch_refine(x, w, &cache);
            std::vector<Tensor> dw;
            for (const auto& t : w) dw.emplace_back(t.dims());
            Tensor dx = fair::patch_refine_backward(cache, w, proj, dw, need_input);
            return std::make_pair(dx, dw);
        };
        nn::DifferentiableFn fx = [&](const Tensor& x, Tensor* g) {
            if (g) *g = grads(x, true).first;
            return loss(x);
        };
        double e = nn::grad_check(fx, Pp, kStep);
        for (std::size_t p = 0; p < fair::kPatchParamCount; ++p) {
            const Tensor saved = w[p];
            nn::DifferentiableFn fw = [&](const Tensor& x, Tensor* g) {
                w[p] = x;
                if (g) *g = grads(Pp, false).second[p];
                return loss(Pp);
            };
            e = std::max(e, nn::grad_check(fw, saved, kStep));
            w[p] = saved;
        }
        add("patch_refine", e);
    }
    return out;
}

fair::FairConfig toy_model_config() {
    fair::FairConfig c;
    c.n_channels = 4;
    c.n_regions = 8;
    c.n_timepoints = 32;
    c.patch_length = 8;
    c.overlap = 4;
    c.attention_dim = 4;
    return c;
}

double model_grad_error(fair::FairModel& model, const Tensor& X, const Tensor& S, double h) {
    Rng rng(99);
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const auto& name = model.params().name(i);
        if (name.find("_gain") != std::string::npos || name.find("_shift") != std::string::npos) {
            for (double& v : model.params()[i].values()) v += 0.3 * rng.normal();
        }
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const Tensor saved = model.params()[i];
        nn::DifferentiableFn f = [&](const Tensor& x, Tensor* grad) {
            model.params()[i] = x;
            nn::Gradients g;
            const double loss = model.loss_and_gradients(X, S, grad ? &g : nullptr);
            if (grad) *grad = g[i];
            return loss;
        };
        worst = std::max(worst, nn::grad_check(f, saved, h));
        model.params()[i] = saved;
    }
    return worst;
}

double directional_grad_error(fair::FairModel& model, const Tensor& X, const Tensor& S) {
    Rng rng(98);
    nn::Gradients g;
    model.loss_and_gradients(X, S, &g);
    const auto base = model.params().values();
    double worst = 0.0;
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<Tensor> dir;
        double analytic = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) {
            dir.push_back(random_tensor(base[i].dims(), rng));
            for (std::size_t k = 0; k < base[i].size(); ++k) analytic += g[i][k] * dir[i][k];
        }
        auto loss_at = [&](double step) {
            for (std::size_t i = 0; i < base.size(); ++i) model.params()[i] = base[i] + dir[i] * step;
            return model.loss_and_gradients(X, S, nullptr);
        };
        const double h = 1e-5;
        const double numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        for (std::size_t i = 0; i < base.size(); ++i) model.params()[i] = base[i];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric)));
    }
    return worst;
}

}  // namespace esi::checks
