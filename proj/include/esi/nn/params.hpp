#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esi/rng.hpp"
#include "esi/tensor.hpp"

namespace esi::nn {

// Ordered set of named learnable tensors. Gradients live outside the store so several
// workers can accumulate into their own buffers.
class ParameterStore {
public:
    std::size_t add(std::string name, Tensor value);

    std::size_t size() const noexcept { return values_.size(); }
    std::size_t index_of(const std::string& name) const;
    const std::string& name(std::size_t i) const { return names_.at(i); }

    Tensor& operator[](std::size_t i) { return values_[i]; }
    const Tensor& operator[](std::size_t i) const { return values_[i]; }
    Tensor& at(const std::string& name) { return values_[index_of(name)]; }
    const Tensor& at(const std::string& name) const { return values_[index_of(name)]; }

    const std::vector<Tensor>& values() const noexcept { return values_; }
    std::vector<Tensor> zeros_like() const;
    std::size_t scalar_count() const;

    friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

using Gradients = std::vector<Tensor>;

void accumulate(Gradients& into, const Gradients& from, double scale = 1.0);

// Fills t with U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

struct AdamState {
    std::uint64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

AdamState make_adam(const ParameterStore& params, double lr = 1e-4, double weight_decay = 1e-5);

// Decoupled weight decay p <- p - lr*wd*p, then the bias-corrected Adam update.
void adam_step(AdamState& state, ParameterStore& params, const Gradients& grads);

// Checkpoint directory: one ESIT tensor per parameter, index.json (name -> file, dims),
// adam.json plus adam_m_*/adam_v_* moment tensors, and a free-form meta.json.
void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& params, const AdamState* adam,
                     const nlohmann::json& meta);

struct LoadedCheckpoint {
    ParameterStore params;
    bool has_adam = false;
    AdamState adam;
    nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace esi::nn
