#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esi/geometry.hpp"
#include "esi/tensor.hpp"

namespace esi {

// Jansen-Rit cortical column. Units: gains in mV, rates in 1/s, potentials in mV.
struct JansenRitParams {
    double A = 3.25;
    double B = 22.0;
    double a = 100.0;
    double b = 50.0;
    double C = 135.0;
    // Connectivity constants as fractions of C.
    double c1_ratio = 1.0;
    double c2_ratio = 0.8;
    double c3_ratio = 0.25;
    double c4_ratio = 0.25;
    double e0 = 2.5;
    double v0 = 6.0;
    double r_sig = 0.56;
    // Extrinsic input p(t): Gaussian, redrawn every input_hold seconds.
    double input_mean = 220.0;
    double input_std = 22.0;
    double input_hold = 1e-3;
    // Optional pulse train added to p(t) (spike preset).
    double pulse_rate = 0.0;
    double pulse_amplitude = 0.0;
    double pulse_width = 0.0;
    double dt = 1e-4;
    double burn_in = 1.0;

    void validate() const;
    std::string describe() const;
};

nlohmann::json to_json(const JansenRitParams& p);
JansenRitParams jansen_rit_from_json(const nlohmann::json& j, JansenRitParams base = {});

// Named presets: "alpha" (canonical constants) and "spike" (C2 = 0.9 C plus input pulses).
JansenRitParams jansen_rit_preset(const std::string& name);

// Per-source relative jitter: each listed parameter is scaled by U(1 - f, 1 + f).
struct ParameterJitter {
    double A = 0.0;
    double B = 0.0;
    double a = 0.0;
    double b = 0.0;
    double C = 0.0;
    double input_mean = 0.0;

    JansenRitParams apply(const JansenRitParams& base, std::uint64_t seed) const;
};

nlohmann::json to_json(const ParameterJitter& j);
ParameterJitter jitter_from_json(const nlohmann::json& j);

// Returns the pyramidal potential y1 - y2 sampled at sample_rate after burn-in, mean-centered.
std::vector<double> simulate_jansen_rit(const JansenRitParams& params, std::size_t n_timepoints, double sample_rate,
                                        std::uint64_t seed);

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

struct SimulationConfig {
    double snr_db = 5.0;
    std::size_t n_sources = 1;
    std::size_t extent = 2;
    std::size_t n_timepoints = 128;
    double sample_rate = 250.0;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const SimulationConfig& c);
SimulationConfig simulation_config_from_json(const nlohmann::json& j);

struct SourceActivity {
    Tensor S;  // N_s x N_t
    std::vector<RegionSet> ground_truth;
};

struct PairedSample {
    Tensor X;  // N_c x N_t
    Tensor S;  // N_s x N_t
    std::vector<RegionSet> ground_truth;
    SimulationConfig config;

    RegionSet active_regions() const;
};

inline constexpr double kPerHopDecay = 0.7;
inline constexpr std::size_t kMaxPlacementAttempts = 1000;

SourceActivity generate_source_activity(const SourceSpace& space, const SimulationConfig& cfg,
                                        const JansenRitParams& params, const ParameterJitter& jitter = {});

Tensor project_forward(const LeadField& lf, const Tensor& S);

// snr_db = kNoiseless returns the input unchanged. The noise realization is rescaled so the
// realized power ratio equals snr_db.
Tensor add_noise(const Tensor& X_clean, double snr_db, std::uint64_t seed);

PairedSample simulate_sample(const SourceSpace& space, const LeadField& lf, const SimulationConfig& cfg,
                             const JansenRitParams& params, const ParameterJitter& jitter = {});

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);
// index mod 12: 10 -> val, 11 -> test, otherwise train.
Split split_for_index(std::size_t index);

struct ManifestEntry {
    std::filesystem::path path;  // sidecar JSON, absolute after loading
    Split split = Split::train;
    SimulationConfig config;
};

struct Manifest {
    std::filesystem::path directory;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> select(Split s) const;
    std::filesystem::path source_space_path() const { return directory / "source_space.json"; }
    std::filesystem::path lead_field_path() const { return directory / "lead_field.esit"; }
};

struct DatasetRequest {
    std::vector<SimulationConfig> grid;  // seed of each cell is the per-cell seed base
    std::size_t n_samples = 12;          // per cell
    JansenRitParams params;
    ParameterJitter jitter;
};

// Writes samples/<cell>_<index>{.json,_X.esit,_S.esit}, source_space.json, lead_field.esit and manifest.json.
std::filesystem::path generate_dataset(const SourceSpace& space, const LeadField& lf, const DatasetRequest& request,
                                       const std::filesystem::path& out_dir);

void save_sample(const PairedSample& sample, const std::filesystem::path& sidecar);
PairedSample load_sample(const std::filesystem::path& sidecar);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace esi
