#include "esi/fair/model.hpp"

#include <cmath>

#include "esi/error.hpp"
#include "esi/nn/conv.hpp"
#include "esi/rng.hpp"

namespace esi::fair {
namespace {

// Offsets from the first head parameter.
enum HeadParam : std::size_t {
    kHeadKernel,
    kHeadBias,
    kMlp0W,
    kMlp0B,
    kMlp1W,
    kMlp1B,
    kResidualW,
    kGruFwdWih,
    kGruFwdWhh,
    kGruFwdBih,
    kGruFwdBhh,
    kGruBwdWih,
    kGruBwdWhh,
    kGruBwdBih,
    kGruBwdBhh,
    kHeadParamCount
};

constexpr const char* kHeadNames[] = {"head.tconv_kernel", "head.tconv_bias", "mlp.0.W",       "mlp.0.b",
                                      "mlp.1.W",           "mlp.1.b",         "residual.W",    "gru.fwd.W_ih",
                                      "gru.fwd.W_hh",      "gru.fwd.b_ih",    "gru.fwd.b_hh",  "gru.bwd.W_ih",
                                      "gru.bwd.W_hh",      "gru.bwd.b_ih",    "gru.bwd.b_hh"};

// Head transpose conv runs over time with the channel axis as depth: {1, N_t, N_c} -> {1, N_t, N_s}.
constexpr std::size_t kHeadKernelWidth = 3;
const nn::ConvGeometry kHeadGeometry{1, 1, 0, kHeadKernelWidth / 2};

struct Layout {
    std::vector<std::string> names;
    std::vector<Dims> dims;
    std::vector<std::size_t> fan_in;
    std::vector<double> constant;  // NaN = random init, else fill value
};

Layout make_layout(const FairConfig& c) {
    Layout out;
    const double rnd = std::nan("");
    auto add = [&](std::string name, Dims d, std::size_t fan, double fill) {
        out.names.push_back(std::move(name));
        out.dims.push_back(std::move(d));
        out.fan_in.push_back(fan);
        out.constant.push_back(fill);
    };
    const std::size_t l = c.patch_length, d = c.attention_dim, k = c.conv_kernel, D = c.conv_depth();
    if (c.use_patch) {
        const auto dims = patch_param_dims(l, d, k, D);
        for (std::size_t b = 0; b < c.n_blocks; ++b) {
            const std::string prefix = "block" + std::to_string(b) + ".";
            for (std::size_t p = 0; p < kPatchParamCount; ++p) {
                const auto param = static_cast<PatchParam>(p);
                std::size_t fan = 1;
                double fill = rnd;
                switch (param) {
                    case kEmbedW: case kEmbedB: fan = 1; break;
                    case kQuery: case kKey: case kValue: case kOutW: case kOutB: fan = d; break;
                    case kConvKernel: case kConvBias: fan = k * k * 2 * l; break;
                    case kTconvKernel: case kTconvBias: fan = k * k * D; break;
                    case kConvGain: case kTconvGain: fill = 1.0; break;
                    case kConvShift: case kTconvShift: fill = 0.0; break;
                    default: break;
                }
                add(prefix + patch_param_name(param), dims[p], fan, fill);
            }
        }
    }
    const std::size_t nc = c.n_channels, ns = c.n_regions, hm = c.effective_mlp_hidden(), hg = c.effective_gru_hidden();
    const Dims head_dims[] = {{1, kHeadKernelWidth, ns, nc}, {ns}, {hm, nc}, {hm}, {ns, hm}, {ns}, {ns, nc},
                              {3 * hg, ns}, {3 * hg, hg}, {3 * hg}, {3 * hg},
                              {3 * hg, ns}, {3 * hg, hg}, {3 * hg}, {3 * hg}};
    const std::size_t head_fan[] = {kHeadKernelWidth * nc, kHeadKernelWidth * nc, nc, nc, hm, hm, nc,
                                    hg, hg, hg, hg, hg, hg, hg, hg};
    for (std::size_t i = 0; i < kHeadParamCount; ++i) add(kHeadNames[i], head_dims[i], head_fan[i], rnd);
    return out;
}

nn::GruParams gru_view(const nn::ParameterStore& p, std::size_t first) {
    return {p[first], p[first + 1], p[first + 2], p[first + 3]};
}

void store_gru_grads(nn::Gradients& g, std::size_t first, nn::GruParams&& d) {
    g[first] += d.W_ih;
    g[first + 1] += d.W_hh;
    g[first + 2] += d.b_ih;
    g[first + 3] += d.b_hh;
}

}  // namespace

FairModel::FairModel(FairConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    const Layout layout = make_layout(config_);
    Rng rng(seed);
    for (std::size_t i = 0; i < layout.names.size(); ++i) {
        Tensor t(layout.dims[i]);
        if (std::isnan(layout.constant[i])) nn::init_uniform(t, layout.fan_in[i], rng);
        else t.fill(layout.constant[i]);
        params_.add(layout.names[i], std::move(t));
    }
    head_index_ = params_.size() - kHeadParamCount;
}

FairModel::FairModel(FairConfig config, nn::ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    require_layout();
    head_index_ = params_.size() - kHeadParamCount;
}

void FairModel::require_layout() const {
    const Layout layout = make_layout(config_);
    if (params_.size() != layout.names.size()) {
        throw FormatError("checkpoint has " + std::to_string(params_.size()) + " tensors, model config expects " +
                          std::to_string(layout.names.size()));
    }
    for (std::size_t i = 0; i < layout.names.size(); ++i) {
        if (params_.name(i) != layout.names[i] || params_[i].dims() != layout.dims[i]) {
            throw FormatError("checkpoint tensor '" + params_.name(i) + "' " + dims_to_string(params_[i].dims()) +
                              " does not match expected '" + layout.names[i] + "' " + dims_to_string(layout.dims[i]));
        }
    }
}

std::span<const Tensor> FairModel::block_weights(std::size_t block) const {
    if (!config_.use_patch) return {};
    return std::span<const Tensor>(params_.values().data() + block * kPatchParamCount, kPatchParamCount);
}

void FairModel::refine_block(const Tensor& P, std::span<const Tensor> w, RefinementTrace::Block& out) const {
    const auto& c = config_;
    out.input = P;
    if (c.use_spectral) out.spectral_out = spectral_refine(P, c.tau, c.spectral_mode, &out.spectral);
    if (c.use_temporal) out.temporal_out = temporal_refine(P, c.tau);
    if (c.use_spectral && c.use_temporal) out.fused = fuse(out.spectral_out, out.temporal_out, c.alpha);
    else if (c.use_spectral) out.fused = out.spectral_out;
    else if (c.use_temporal) out.fused = out.temporal_out;
    else out.fused = P;
    out.output = c.use_patch ? patch_refine(out.fused, w, &out.patch) : out.fused;
}

Tensor FairModel::forward(const Tensor& X, RefinementTrace* trace) const {
    const auto& c = config_;
    if (X.rank() != 2 || X.dim(0) != c.n_channels || X.dim(1) != c.n_timepoints) {
        throw ParameterError("fragment dims " + dims_to_string(X.dims()) + " do not match model " +
                             dims_to_string({c.n_channels, c.n_timepoints}));
    }
    RefinementTrace local;
    RefinementTrace& tr = trace ? *trace : local;

    auto norm = normalize_fragment(X);
    tr.scale = norm.scale;
    tr.x_norm = std::move(norm.X);
    tr.grid = extract_patches(tr.x_norm, c.patch_length, c.overlap);
    tr.blocks.assign(c.n_blocks, {});
    Tensor P = tr.grid.patches;
    for (std::size_t b = 0; b < c.n_blocks; ++b) {
        refine_block(P, block_weights(b), tr.blocks[b]);
        P = tr.blocks[b].output;
    }
    PatchGrid out_grid = tr.grid;
    out_grid.patches = std::move(P);
    tr.merged = merge_patches(out_grid);

    const std::size_t nt = c.n_timepoints, nc = c.n_channels, ns = c.n_regions;
    const std::size_t h = head_index_;
    const Tensor merged_t = transpose(tr.merged).reshaped({1, nt, nc});
    tr.head = nn::transpose_conv2d(merged_t, params_[h + kHeadKernel], params_[h + kHeadBias], kHeadGeometry)
                  .reshaped({nt, ns});

    const Tensor xt = transpose(tr.x_norm);
    const std::vector<nn::LinearLayer> layers{{params_[h + kMlp0W], params_[h + kMlp0B]},
                                              {params_[h + kMlp1W], params_[h + kMlp1B]}};
    tr.gru_input = tr.head;
    tr.gru_input += nn::mlp(xt, layers, &tr.mlp);
    tr.gru_input += nn::linear(xt, params_[h + kResidualW], Tensor());

    const nn::BiGruParams gp{gru_view(params_, h + kGruFwdWih), gru_view(params_, h + kGruBwdWih)};
    Tensor out = nn::bigru(tr.gru_input, gp, &tr.gru);
    out *= c.output_scale;
    tr.estimate_norm = transpose(out);
    Tensor estimate = tr.estimate_norm;
    estimate *= tr.scale;
    return estimate;
}

nn::Gradients FairModel::backward(const RefinementTrace& tr, const Tensor& grad_estimate_norm) const {
    const auto& c = config_;
    require_same_dims(tr.estimate_norm, grad_estimate_norm, "FairModel::backward");
    const std::size_t nt = c.n_timepoints, nc = c.n_channels, ns = c.n_regions;
    const std::size_t h = head_index_;
    nn::Gradients g = params_.zeros_like();

    Tensor g_out = transpose(grad_estimate_norm);
    g_out *= c.output_scale;
    const nn::BiGruParams gp{gru_view(params_, h + kGruFwdWih), gru_view(params_, h + kGruBwdWih)};
    auto gg = nn::bigru_backward(tr.gru, gp, g_out);
    store_gru_grads(g, h + kGruFwdWih, std::move(gg.dparams.forward));
    store_gru_grads(g, h + kGruBwdWih, std::move(gg.dparams.backward));
    const Tensor& g_sum = gg.dx;  // N_t x N_s

    const Tensor xt = transpose(tr.x_norm);
    nn::linear_backward_into(xt, params_[h + kResidualW], g_sum, nullptr, g[h + kResidualW], nullptr);
    const std::vector<nn::LinearLayer> layers{{params_[h + kMlp0W], params_[h + kMlp0B]},
                                              {params_[h + kMlp1W], params_[h + kMlp1B]}};
    auto mg = nn::mlp_backward(layers, tr.mlp, g_sum);
    g[h + kMlp0W] += mg.layers[0].W;
    g[h + kMlp0B] += mg.layers[0].b;
    g[h + kMlp1W] += mg.layers[1].W;
    g[h + kMlp1B] += mg.layers[1].b;

    const Tensor merged_t = transpose(tr.merged).reshaped({1, nt, nc});
    auto hg = nn::transpose_conv2d_backward(merged_t, params_[h + kHeadKernel], kHeadGeometry,
                                            g_sum.reshaped({1, nt, ns}), true);
    g[h + kHeadKernel] += hg.dkernel;
    g[h + kHeadBias] += hg.dbias;
    Tensor gP = merge_patches_backward(transpose(hg.dx.reshaped({nt, nc})), tr.grid);

    // The first block's input is data, so its input gradient is skipped.
    for (std::size_t b = c.n_blocks; b-- > 0;) {
        const auto& blk = tr.blocks[b];
        const bool need_input = b > 0;
        Tensor gL;
        if (c.use_patch) {
            std::span<Tensor> dw(g.data() + b * kPatchParamCount, kPatchParamCount);
            gL = patch_refine_backward(blk.patch, block_weights(b), gP, dw, need_input);
        } else {
            gL = std::move(gP);
        }
        if (!need_input) break;
        if (!c.use_spectral && !c.use_temporal) {
            gP = std::move(gL);
            continue;
        }
        const double ws = c.use_spectral && c.use_temporal ? c.alpha : 1.0;
        const double wt = c.use_spectral && c.use_temporal ? 1.0 - c.alpha : 1.0;
        gP = Tensor(blk.input.dims());
        if (c.use_spectral) {
            Tensor gs = gL;
            gs *= ws;
            gP += spectral_refine_backward(blk.spectral, c.tau, c.spectral_mode, gs);
        }
        if (c.use_temporal) {
            Tensor gt = gL;
            gt *= wt;
            gP += temporal_refine_backward(blk.temporal_out, c.tau, gt);
        }
    }
    return g;
}

double FairModel::loss_and_gradients(const Tensor& X, const Tensor& S, nn::Gradients* grads) const {
    RefinementTrace tr;
    forward(X, &tr);
    Tensor target = S;
    require_same_dims(tr.estimate_norm, target, "loss target");
    target *= 1.0 / tr.scale;
    const double loss = mse_loss(tr.estimate_norm, target);
    if (grads) *grads = backward(tr, mse_loss_gradient(tr.estimate_norm, target));
    return loss;
}

void FairModel::save(const std::filesystem::path& dir, const nn::AdamState* adam, nlohmann::json meta) const {
    meta["model"] = to_json(config_);
    nn::save_checkpoint(dir, params_, adam, meta);
}

FairModel FairModel::load(const std::filesystem::path& dir, nn::AdamState* adam, nlohmann::json* meta) {
    auto ck = nn::load_checkpoint(dir);
    if (!ck.meta.contains("model")) throw FormatError("checkpoint " + dir.string() + " has no model config");
    FairModel model(fair_config_from_json(ck.meta.at("model")), std::move(ck.params));
    if (adam) {
        if (!ck.has_adam) throw FormatError("checkpoint " + dir.string() + " has no optimizer state");
        *adam = std::move(ck.adam);
    }
    if (meta) *meta = std::move(ck.meta);
    return model;
}

double mse_loss(const Tensor& estimate, const Tensor& target) {
    require_same_dims(estimate, target, "mse_loss");
    if (estimate.rank() != 2 || estimate.dim(0) == 0) throw ParameterError("mse_loss expects an N_s x N_t matrix");
    double acc = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double d = estimate[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(estimate.dim(0));
}

Tensor mse_loss_gradient(const Tensor& estimate, const Tensor& target) {
    require_same_dims(estimate, target, "mse_loss_gradient");
    Tensor g(estimate.dims());
    const double k = 2.0 / static_cast<double>(estimate.dim(0));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (estimate[i] - target[i]);
    return g;
}

}  // namespace esi::fair
