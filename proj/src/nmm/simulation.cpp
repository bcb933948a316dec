#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "esi/error.hpp"
#include "esi/nmm.hpp"
#include "esi/parallel.hpp"
#include "esi/rng.hpp"
#include "esi/tensor_io.hpp"

namespace esi {
namespace {

// Seed streams within one sample.
constexpr std::uint64_t kPlacementStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kWaveformStreamBase = 100;
constexpr std::uint64_t kJitterStreamBase = 200;

nlohmann::json snr_to_json(double snr) {
    if (std::isinf(snr) && snr > 0) return "inf";
    return snr;
}

double snr_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return kNoiseless;
        throw ParameterError("snr_db must be a number or \"inf\"");
    }
    return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const JansenRitParams& p) {
    return {{"A", p.A},
            {"B", p.B},
            {"a", p.a},
            {"b", p.b},
            {"C", p.C},
            {"c1_ratio", p.c1_ratio},
            {"c2_ratio", p.c2_ratio},
            {"c3_ratio", p.c3_ratio},
            {"c4_ratio", p.c4_ratio},
            {"e0", p.e0},
            {"v0", p.v0},
            {"r_sig", p.r_sig},
            {"input_mean", p.input_mean},
            {"input_std", p.input_std},
            {"input_hold", p.input_hold},
            {"pulse_rate", p.pulse_rate},
            {"pulse_amplitude", p.pulse_amplitude},
            {"pulse_width", p.pulse_width},
            {"dt", p.dt},
            {"burn_in", p.burn_in}};
}

JansenRitParams jansen_rit_from_json(const nlohmann::json& j, JansenRitParams p) {
    std::map<std::string, double*> fields{{"A", &p.A},
                                          {"B", &p.B},
                                          {"a", &p.a},
                                          {"b", &p.b},
                                          {"C", &p.C},
                                          {"c1_ratio", &p.c1_ratio},
                                          {"c2_ratio", &p.c2_ratio},
                                          {"c3_ratio", &p.c3_ratio},
                                          {"c4_ratio", &p.c4_ratio},
                                          {"e0", &p.e0},
                                          {"v0", &p.v0},
                                          {"r_sig", &p.r_sig},
                                          {"input_mean", &p.input_mean},
                                          {"input_std", &p.input_std},
                                          {"input_hold", &p.input_hold},
                                          {"pulse_rate", &p.pulse_rate},
                                          {"pulse_amplitude", &p.pulse_amplitude},
                                          {"pulse_width", &p.pulse_width},
                                          {"dt", &p.dt},
                                          {"burn_in", &p.burn_in}};
    for (const auto& [key, value] : j.items()) {
        auto it = fields.find(key);
        if (it == fields.end()) throw ParameterError("unknown Jansen-Rit parameter '" + key + "'");
        if (!value.is_number()) throw ParameterError("Jansen-Rit parameter '" + key + "' must be a number");
        *it->second = value.get<double>();
    }
    p.validate();
    return p;
}

nlohmann::json to_json(const ParameterJitter& j) {
    return {{"A", j.A}, {"B", j.B}, {"a", j.a}, {"b", j.b}, {"C", j.C}, {"input_mean", j.input_mean}};
}

ParameterJitter jitter_from_json(const nlohmann::json& j) {
    ParameterJitter out;
    std::map<std::string, double*> fields{{"A", &out.A}, {"B", &out.B}, {"a", &out.a},
                                          {"b", &out.b}, {"C", &out.C}, {"input_mean", &out.input_mean}};
    for (const auto& [key, value] : j.items()) {
        auto it = fields.find(key);
        if (it == fields.end()) throw ParameterError("unknown jitter parameter '" + key + "'");
        if (!value.is_number()) throw ParameterError("jitter '" + key + "' must be a number");
        const double v = value.get<double>();
        if (v < 0.0 || v >= 1.0) throw ParameterError("jitter '" + key + "' must be in [0, 1)");
        *it->second = v;
    }
    return out;
}

void SimulationConfig::validate() const {
    if (n_sources < 1) throw ParameterError("n_sources must be >= 1");
    if (extent < 1) throw ParameterError("extent must be >= 1");
    if (n_timepoints < 32) throw ParameterError("n_timepoints must be >= 32");
    if (std::isnan(snr_db) || snr_db == -kNoiseless) throw ParameterError("snr_db must be finite or +inf");
    if (!(sample_rate >= 100.0)) throw ParameterError("sample_rate must be >= 100 Hz");
}

nlohmann::json to_json(const SimulationConfig& c) {
    return {{"snr_db", snr_to_json(c.snr_db)}, {"n_sources", c.n_sources},     {"extent", c.extent},
            {"n_timepoints", c.n_timepoints},  {"sample_rate", c.sample_rate}, {"seed", c.seed}};
}

SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
    SimulationConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "snr_db") {
                c.snr_db = snr_from_json(value);
            } else if (key == "n_sources") {
                c.n_sources = value.get<std::size_t>();
            } else if (key == "extent") {
                c.extent = value.get<std::size_t>();
            } else if (key == "n_timepoints") {
                c.n_timepoints = value.get<std::size_t>();
            } else if (key == "sample_rate") {
                c.sample_rate = value.get<double>();
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else {
                throw ParameterError("unknown simulation key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("invalid simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

RegionSet PairedSample::active_regions() const {
    RegionSet all;
    for (const auto& g : ground_truth) all = all.united(g);
    return all;
}

SourceActivity generate_source_activity(const SourceSpace& space, const SimulationConfig& cfg,
                                        const JansenRitParams& params, const ParameterJitter& jitter) {
    cfg.validate();
    const std::size_t n_regions = space.n_regions();
    std::size_t max_footprint = 0;
    for (std::size_t c = 0; c < n_regions; ++c) {
        max_footprint = std::max(max_footprint, grow_patch(space, c, cfg.extent).size());
    }
    if (2 * cfg.n_sources * max_footprint >= n_regions) {
        throw ParameterError("n_sources x footprint (" + std::to_string(cfg.n_sources) + " x " +
                             std::to_string(max_footprint) + ") must stay below half of " +
                             std::to_string(n_regions) + " regions");
    }

    Rng placement(derive_seed(cfg.seed, kPlacementStream));
    std::vector<std::size_t> centers;
    std::vector<RegionSet> footprints;
    RegionSet occupied;
    std::size_t attempts = 0;
    while (centers.size() < cfg.n_sources) {
        if (attempts++ >= kMaxPlacementAttempts) {
            throw PlacementError("could not place " + std::to_string(cfg.n_sources) +
                                 " non-overlapping sources after " + std::to_string(kMaxPlacementAttempts) +
                                 " attempts");
        }
        const auto center = static_cast<std::size_t>(placement.below(n_regions));
        RegionSet fp = grow_patch(space, center, cfg.extent);
        if (fp.intersects(occupied)) continue;
        occupied = occupied.united(fp);
        centers.push_back(center);
        footprints.push_back(std::move(fp));
    }

    Tensor S({n_regions, cfg.n_timepoints});
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const JansenRitParams p = jitter.apply(params, derive_seed(cfg.seed, kJitterStreamBase + k));
        const auto wave =
            simulate_jansen_rit(p, cfg.n_timepoints, cfg.sample_rate, derive_seed(cfg.seed, kWaveformStreamBase + k));
        for (const auto& [region, hops] : hop_distances(space, centers[k], cfg.extent - 1)) {
            const double factor = std::pow(kPerHopDecay, static_cast<double>(hops));
            for (std::size_t t = 0; t < cfg.n_timepoints; ++t) S(region, t) = factor * wave[t];
        }
    }
    return {std::move(S), std::move(footprints)};
}

Tensor project_forward(const LeadField& lf, const Tensor& S) {
    if (S.rank() != 2 || S.dim(0) != lf.n_regions()) {
        throw ParameterError("project_forward: source matrix " + dims_to_string(S.dims()) +
                             " incompatible with lead field " + dims_to_string(lf.matrix().dims()));
    }
    return matmul(lf.matrix(), S);
}

Tensor add_noise(const Tensor& X_clean, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0) return X_clean;
    if (!std::isfinite(snr_db)) throw ParameterError("snr_db must be finite or +inf");
    const double n = static_cast<double>(X_clean.size());
    const double signal_power = X_clean.sum_squares() / n;
    if (!(signal_power > 0.0)) throw ParameterError("add_noise: signal has zero power");

    Rng rng(seed);
    Tensor noise(X_clean.dims());
    for (double& v : noise.values()) v = rng.normal();
    const double realized = noise.sum_squares() / n;
    const double target = signal_power / std::pow(10.0, snr_db / 10.0);
    noise *= std::sqrt(target / realized);
    return X_clean + noise;
}

PairedSample simulate_sample(const SourceSpace& space, const LeadField& lf, const SimulationConfig& cfg,
                             const JansenRitParams& params, const ParameterJitter& jitter) {
    if (lf.n_regions() != space.n_regions()) throw ParameterError("lead field and source space disagree on N_s");
    auto activity = generate_source_activity(space, cfg, params, jitter);
    Tensor X = add_noise(project_forward(lf, activity.S), cfg.snr_db, derive_seed(cfg.seed, kNoiseStream));
    return {std::move(X), std::move(activity.S), std::move(activity.ground_truth), cfg};
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw FormatError("unknown split '" + s + "'");
}

Split split_for_index(std::size_t index) {
    switch (index % 12) {
        case 10: return Split::val;
        case 11: return Split::test;
        default: return Split::train;
    }
}

std::vector<ManifestEntry> Manifest::select(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(e);
    return out;
}

void save_sample(const PairedSample& sample, const std::filesystem::path& sidecar) {
    const std::string stem = sidecar.stem().string();
    const auto x_name = stem + "_X.esit";
    const auto s_name = stem + "_S.esit";
    save_tensor(sample.X, sidecar.parent_path() / x_name);
    save_tensor(sample.S, sidecar.parent_path() / s_name);
    nlohmann::json gt = nlohmann::json::array();
    for (const auto& g : sample.ground_truth) gt.push_back(g.regions());
    const nlohmann::json j{{"X", x_name}, {"S", s_name}, {"config", to_json(sample.config)}, {"ground_truth", gt}};
    write_text_file(sidecar, j.dump(1) + "\n");
}

PairedSample load_sample(const std::filesystem::path& sidecar) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(sidecar));
        PairedSample s;
        const auto dir = sidecar.parent_path();
        s.X = load_tensor(dir / j.at("X").get<std::string>());
        s.S = load_tensor(dir / j.at("S").get<std::string>());
        s.config = simulation_config_from_json(j.at("config"));
        for (const auto& g : j.at("ground_truth")) s.ground_truth.emplace_back(g.get<std::vector<std::size_t>>());
        if (s.X.rank() != 2 || s.S.rank() != 2 || s.X.dim(1) != s.S.dim(1)) {
            throw FormatError(sidecar.string() + ": X/S shapes inconsistent");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(sidecar.string() + ": " + e.what());
    }
}

Manifest load_manifest(const std::filesystem::path& path) {
    Manifest m;
    m.directory = path.parent_path();
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        for (const auto& e : j) {
            ManifestEntry entry;
            entry.path = m.directory / e.at("path").get<std::string>();
            entry.split = split_from_string(e.at("split").get<std::string>());
            entry.config = simulation_config_from_json(e.at("config"));
            m.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return m;
}

std::filesystem::path generate_dataset(const SourceSpace& space, const LeadField& lf, const DatasetRequest& request,
                                       const std::filesystem::path& out_dir) {
    if (request.grid.empty()) throw ParameterError("dataset grid is empty");
    for (const auto& cfg : request.grid) cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "samples", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "samples").string() + ": " + ec.message());

    save_source_space(space, out_dir / "source_space.json");
    save_lead_field(lf, out_dir / "lead_field.esit");

    const std::size_t n_cells = request.grid.size();
    const std::size_t total = n_cells * request.n_samples;
    std::vector<nlohmann::json> entries(total);
    parallel_for(total, [&](std::size_t job) {
        const std::size_t cell = job / request.n_samples;
        const std::size_t index = job % request.n_samples;
        SimulationConfig cfg = request.grid[cell];
        cfg.seed = request.grid[cell].seed + index;
        char name[64];
        std::snprintf(name, sizeof(name), "c%03zu_s%06zu.json", cell, index);
        const auto rel = std::filesystem::path("samples") / name;
        save_sample(simulate_sample(space, lf, cfg, request.params, request.jitter), out_dir / rel);
        entries[job] = {{"path", rel.generic_string()},
                        {"split", to_string(split_for_index(index))},
                        {"cell", cell},
                        {"config", to_json(cfg)}};
    });
    const auto manifest = out_dir / "manifest.json";
    write_text_file(manifest, nlohmann::json(entries).dump(1) + "\n");
    return manifest;
}

}  // namespace esi
