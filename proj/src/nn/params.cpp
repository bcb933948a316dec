#include "esi/nn/params.hpp"

#include <cmath>

#include "esi/error.hpp"
#include "esi/tensor_io.hpp"

namespace esi::nn {

std::size_t ParameterStore::add(std::string name, Tensor value) {
    for (const auto& n : names_)
        if (n == name) throw ParameterError("duplicate parameter name '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    throw ParameterError("unknown parameter '" + name + "'");
}

std::vector<Tensor> ParameterStore::zeros_like() const {
    std::vector<Tensor> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.emplace_back(v.dims());
    return out;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

void accumulate(Gradients& into, const Gradients& from, double scale) {
    if (into.size() != from.size()) throw ParameterError("gradient set size mismatch");
    for (std::size_t i = 0; i < into.size(); ++i) {
        require_same_dims(into[i], from[i], "accumulate gradients");
        for (std::size_t k = 0; k < into[i].size(); ++k) into[i][k] += scale * from[i][k];
    }
}

void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

AdamState make_adam(const ParameterStore& params, double lr, double weight_decay) {
    AdamState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

void adam_step(AdamState& state, ParameterStore& params, const Gradients& grads) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ParameterError("adam_step: parameter/gradient/moment count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_dims(params[i], grads[i], "adam_step gradient");
        require_same_dims(params[i], state.m[i], "adam_step moment");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] -= state.lr * state.weight_decay * p[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& params, const AdamState* adam,
                     const nlohmann::json& meta) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
    nlohmann::json index = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string file = params.name(i) + ".esit";
        save_tensor(params[i], dir / file);
        index.push_back({{"name", params.name(i)}, {"file", file}, {"dims", params[i].dims()}});
    }
    write_text_file(dir / "index.json", index.dump(1) + "\n");
    if (adam) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            save_tensor(adam->m[i], dir / ("adam_m_" + params.name(i) + ".esit"));
            save_tensor(adam->v[i], dir / ("adam_v_" + params.name(i) + ".esit"));
        }
        const nlohmann::json a{{"step", adam->step},   {"lr", adam->lr},   {"beta1", adam->beta1},
                               {"beta2", adam->beta2}, {"eps", adam->eps}, {"weight_decay", adam->weight_decay}};
        write_text_file(dir / "adam.json", a.dump(1) + "\n");
    }
    write_text_file(dir / "meta.json", meta.dump(1) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ParameterError("checkpoint directory not found: " + dir.string());
    LoadedCheckpoint out;
    try {
        const auto index = nlohmann::json::parse(read_text_file(dir / "index.json"));
        for (const auto& e : index) {
            Tensor t = load_tensor(dir / e.at("file").get<std::string>());
            if (t.dims() != e.at("dims").get<Dims>()) {
                throw FormatError("checkpoint tensor " + e.at("name").get<std::string>() + " dims disagree with index");
            }
            out.params.add(e.at("name").get<std::string>(), std::move(t));
        }
        if (std::filesystem::exists(dir / "adam.json")) {
            const auto a = nlohmann::json::parse(read_text_file(dir / "adam.json"));
            out.has_adam = true;
            out.adam.step = a.at("step").get<std::uint64_t>();
            out.adam.lr = a.at("lr").get<double>();
            out.adam.beta1 = a.at("beta1").get<double>();
            out.adam.beta2 = a.at("beta2").get<double>();
            out.adam.eps = a.at("eps").get<double>();
            out.adam.weight_decay = a.at("weight_decay").get<double>();
            for (std::size_t i = 0; i < out.params.size(); ++i) {
                out.adam.m.push_back(load_tensor(dir / ("adam_m_" + out.params.name(i) + ".esit")));
                out.adam.v.push_back(load_tensor(dir / ("adam_v_" + out.params.name(i) + ".esit")));
            }
        }
        if (std::filesystem::exists(dir / "meta.json")) out.meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint " + dir.string() + ": " + e.what());
    }
    return out;
}

}  // namespace esi::nn
