#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "esi/dataset.hpp"
#include "esi/fair/config.hpp"
#include "esi/fair/refine.hpp"
#include "esi/nn/gru.hpp"
#include "esi/nn/ops.hpp"
#include "esi/nn/params.hpp"

namespace esi::fair {

// Intermediate values of one forward pass, kept for backward and inspection.
struct RefinementTrace {
    struct Block {
        Tensor input;          // P entering the block
        SpectralCache spectral;
        Tensor spectral_out;   // P*_S (empty when the view is disabled)
        Tensor temporal_out;   // P*_T
        Tensor fused;          // P^L
        PatchRefineCache patch;
        Tensor output;         // P^{O*}
    };

    double scale = 1.0;        // max |X| of the raw fragment
    Tensor x_norm;             // N_c x N_t
    PatchGrid grid;            // initial P
    std::vector<Block> blocks;
    Tensor merged;             // P^O merged back to N_c x N_t
    Tensor head;               // N_t x N_s
    nn::MlpCache mlp;
    Tensor gru_input;          // N_t x N_s
    nn::BiGruCache gru;
    Tensor estimate_norm;      // N_s x N_t, before de-normalization

    const std::vector<std::size_t>& key_indices(std::size_t block) const { return blocks.at(block).patch.key_index; }
};

class FairModel {
public:
    FairModel(FairConfig config, std::uint64_t seed);
    // Adopts an existing parameter set; names and shapes must match the config's layout.
    FairModel(FairConfig config, nn::ParameterStore params);

    const FairConfig& config() const noexcept { return config_; }
    nn::ParameterStore& params() noexcept { return params_; }
    const nn::ParameterStore& params() const noexcept { return params_; }

    // Ŝ (N_s x N_t) in the units of the training targets.
    Tensor forward(const Tensor& X, RefinementTrace* trace = nullptr) const;

    // Parameter gradients of the loss given dL/d(estimate_norm).
    nn::Gradients backward(const RefinementTrace& trace, const Tensor& grad_estimate_norm) const;

    // Loss on max-|X| normalized targets; fills grads when non-null.
    double loss_and_gradients(const Tensor& X, const Tensor& S, nn::Gradients* grads) const;

    void save(const std::filesystem::path& dir, const nn::AdamState* adam, nlohmann::json meta = {}) const;
    static FairModel load(const std::filesystem::path& dir, nn::AdamState* adam = nullptr,
                          nlohmann::json* meta = nullptr);

private:
    std::span<const Tensor> block_weights(std::size_t block) const;
    void require_layout() const;
    void refine_block(const Tensor& P, std::span<const Tensor> w, RefinementTrace::Block& out) const;

    FairConfig config_;
    nn::ParameterStore params_;
    std::size_t head_index_ = 0;  // first non-block parameter
};

// (1/N_s) * ||estimate - target||_F^2, with N_s the row count.
double mse_loss(const Tensor& estimate, const Tensor& target);
Tensor mse_loss_gradient(const Tensor& estimate, const Tensor& target);

}  // namespace esi::fair
