#include "esi/fair/config.hpp"

#include "esi/error.hpp"
#include "esi/nn/fft.hpp"

namespace esi::fair {

std::string to_string(SpectralMode m) { return m == SpectralMode::replace ? "replace" : "reweight"; }

SpectralMode spectral_mode_from_string(const std::string& s) {
    if (s == "replace") return SpectralMode::replace;
    if (s == "reweight") return SpectralMode::reweight;
    throw ParameterError("spectral_mode must be 'replace' or 'reweight', got '" + s + "'");
}

void FairConfig::validate() const {
    if (n_channels < 1 || n_regions < 2 || n_timepoints < 1) throw ParameterError("model dimensions must be positive");
    if (!nn::is_power_of_two(patch_length) || patch_length < 2) {
        throw ParameterError("patch_length must be a power of two >= 2");
    }
    if (overlap >= patch_length) throw ParameterError("overlap must be < patch_length");
    if (patch_length > n_timepoints) throw ParameterError("patch_length exceeds n_timepoints");
    if (!(tau > 0.0)) throw ParameterError("tau must be > 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must be in [0, 1]");
    if (n_blocks < 1) throw ParameterError("n_blocks must be >= 1");
    if (attention_dim < 1) throw ParameterError("attention_dim must be >= 1");
    if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ParameterError("conv_kernel must be odd");
    if (conv_depth_multiplier < 1) throw ParameterError("conv_depth_multiplier must be >= 1");
    if (2 * effective_gru_hidden() != n_regions) {
        throw ParameterError("BiGRU output 2 x gru_hidden must equal n_regions (" + std::to_string(n_regions) + ")");
    }
    if (!(output_scale > 0.0)) throw ParameterError("output_scale must be > 0");
}

nlohmann::json to_json(const FairConfig& c) {
    return {{"n_channels", c.n_channels},
            {"n_regions", c.n_regions},
            {"n_timepoints", c.n_timepoints},
            {"patch_length", c.patch_length},
            {"overlap", c.overlap},
            {"tau", c.tau},
            {"alpha", c.alpha},
            {"n_blocks", c.n_blocks},
            {"attention_dim", c.attention_dim},
            {"conv_kernel", c.conv_kernel},
            {"conv_depth_multiplier", c.conv_depth_multiplier},
            {"gru_hidden", c.effective_gru_hidden()},
            {"mlp_hidden", c.effective_mlp_hidden()},
            {"output_scale", c.output_scale},
            {"spectral_mode", to_string(c.spectral_mode)},
            {"use_spectral", c.use_spectral},
            {"use_temporal", c.use_temporal},
            {"use_patch", c.use_patch}};
}

FairConfig fair_config_from_json(const nlohmann::json& j, FairConfig c) {
    if (!j.is_object()) throw ParameterError("model config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "n_channels") c.n_channels = v.get<std::size_t>();
            else if (key == "n_regions") c.n_regions = v.get<std::size_t>();
            else if (key == "n_timepoints") c.n_timepoints = v.get<std::size_t>();
            else if (key == "patch_length") c.patch_length = v.get<std::size_t>();
            else if (key == "overlap") c.overlap = v.get<std::size_t>();
            else if (key == "tau") c.tau = v.get<double>();
            else if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "n_blocks") c.n_blocks = v.get<std::size_t>();
            else if (key == "attention_dim") c.attention_dim = v.get<std::size_t>();
            else if (key == "conv_kernel") c.conv_kernel = v.get<std::size_t>();
            else if (key == "conv_depth_multiplier") c.conv_depth_multiplier = v.get<std::size_t>();
            else if (key == "gru_hidden") c.gru_hidden = v.get<std::size_t>();
            else if (key == "mlp_hidden") c.mlp_hidden = v.get<std::size_t>();
            else if (key == "output_scale") c.output_scale = v.get<double>();
            else if (key == "spectral_mode") c.spectral_mode = spectral_mode_from_string(v.get<std::string>());
            else if (key == "use_spectral") c.use_spectral = v.get<bool>();
            else if (key == "use_temporal") c.use_temporal = v.get<bool>();
            else if (key == "use_patch") c.use_patch = v.get<bool>();
            else throw ParameterError("unknown model key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("invalid model config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace esi::fair
