#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

namespace esi::fair {

// How the spectral view treats FFT coefficients: `replace` feeds the softmaxed parts to the
// IFFT as-is; `reweight` multiplies each coefficient by its softmax weight.
enum class SpectralMode { replace, reweight };

std::string to_string(SpectralMode m);
SpectralMode spectral_mode_from_string(const std::string& s);

struct FairConfig {
    std::size_t n_channels = 32;
    std::size_t n_regions = 64;
    std::size_t n_timepoints = 128;
    std::size_t patch_length = 16;
    std::size_t overlap = 8;
    double tau = 0.1;
    double alpha = 0.5;
    std::size_t n_blocks = 1;
    std::size_t attention_dim = 16;
    std::size_t conv_kernel = 3;
    // ConvBlock output depth = multiplier * patch_length; TransposeConvBlock restores patch_length.
    std::size_t conv_depth_multiplier = 2;
    // 0 selects n_regions / 2 per direction.
    std::size_t gru_hidden = 0;
    // 0 selects n_regions.
    std::size_t mlp_hidden = 0;
    // Normalized estimate = output_scale * BiGRU(...).
    double output_scale = 1.0;
    SpectralMode spectral_mode = SpectralMode::replace;
    bool use_spectral = true;
    bool use_temporal = true;
    bool use_patch = true;

    std::size_t effective_gru_hidden() const { return gru_hidden ? gru_hidden : n_regions / 2; }
    std::size_t effective_mlp_hidden() const { return mlp_hidden ? mlp_hidden : n_regions; }
    std::size_t conv_depth() const { return conv_depth_multiplier * patch_length; }

    void validate() const;
};

nlohmann::json to_json(const FairConfig& c);
// Starts from `base` and overrides the keys present; unknown keys are rejected.
FairConfig fair_config_from_json(const nlohmann::json& j, FairConfig base = {});

}  // namespace esi::fair
