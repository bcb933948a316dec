#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esi/eval/metrics.hpp"
#include "esi/fair/config.hpp"
#include "esi/fair/trainer.hpp"
#include "esi/geometry.hpp"
#include "esi/nmm.hpp"

namespace esi::cli {

struct GeometrySection {
    std::size_t n_regions = 64;
    std::size_t k_neighbors = 6;
    std::size_t n_channels = 32;
};

struct SimulationSection {
    std::vector<SimulationConfig> grid;  // snr_db, n_sources, extent per cell
    std::size_t samples_per_cell = 12;
    std::size_t n_timepoints = 128;
    double sample_rate = 250.0;
    std::string preset = "alpha";
    nlohmann::json jansen_rit = nlohmann::json::object();  // overrides on top of the preset
    ParameterJitter jitter;
};

struct EvaluationSection {
    double active_fraction = eval::kDefaultActiveFraction;
    double sloreta_lambda = 0.05;
};

struct PathsSection {
    std::filesystem::path out;
    std::filesystem::path manifest;
    std::filesystem::path checkpoint;
    std::filesystem::path fragment;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    GeometrySection geometry;
    SimulationSection simulation;
    fair::FairConfig model;
    fair::TrainingConfig training;
    EvaluationSection evaluation;
    PathsSection paths;

    // Effective paths: explicit entries, else defaults under paths.out.
    std::filesystem::path out_dir() const;
    std::filesystem::path manifest_path() const;
    std::filesystem::path checkpoint_path() const;

    JansenRitParams jansen_rit_params() const;
};

// Strict parse: unknown keys anywhere are rejected. Relative paths resolve against base_dir.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

// Replaces the top-level seed and everything derived from it.
void set_seed(ExperimentConfig& c, std::uint64_t seed);

// Seeds derived from the top-level seed.
std::uint64_t geometry_seed(const ExperimentConfig& c);
std::uint64_t lead_field_seed(const ExperimentConfig& c);
std::uint64_t cell_seed(const ExperimentConfig& c, std::size_t cell);
std::uint64_t model_seed(const ExperimentConfig& c);

SourceSpace build_source_space(const ExperimentConfig& c);

struct SimulateResult {
    std::filesystem::path manifest;
    std::vector<std::size_t> samples_per_cell;
};

SimulateResult cmd_simulate(const ExperimentConfig& c);
fair::TrainingResult cmd_train(const ExperimentConfig& c, bool resume = false);

enum class Solver { fair, sloreta };
std::string to_string(Solver s);
Solver solver_from_string(const std::string& s);

struct SolverEvaluation {
    Solver solver;
    std::vector<eval::MetricReport> reports;
    std::vector<std::string> sample_ids;
    eval::ReportSummary summary;
};

struct EvalResult {
    std::vector<SolverEvaluation> solvers;
    std::filesystem::path summary_path;
};

// Writes <out>/eval/<solver>_samples.csv and <out>/eval/summary.json.
EvalResult cmd_eval(const ExperimentConfig& c, const std::vector<Solver>& solvers);

// Runs one solver over the test split of a manifest.
SolverEvaluation evaluate_split(const ExperimentConfig& c, Solver solver, const Manifest& manifest,
                                const std::filesystem::path& checkpoint);

struct LocalizeResult {
    std::filesystem::path estimate;
    std::filesystem::path svg;
};

// Writes <out>/localize/estimate.esit and topography.svg for the fragment at paths.fragment.
LocalizeResult cmd_localize(const ExperimentConfig& c, Solver solver = Solver::fair);

// Superior and inferior views of region energies: one disc per centroid, gray when the energy is zero.
std::string render_topography_svg(const SourceSpace& space, const Tensor& estimate);

struct AblationRow {
    std::string variant;
    std::size_t epochs = 0;
    double best_val_loss = 0.0;
    bool reused = false;
    eval::ReportSummary summary;
};

inline const std::vector<std::string> kAblationVariants = {"full", "no_spectral", "no_temporal", "no_patch"};
fair::FairConfig ablation_variant(fair::FairConfig base, const std::string& variant);

// Trains and tests each variant under <out>/ablation/<variant>. With reuse=true a variant
// whose log already holds training.epochs rows is evaluated without retraining.
std::vector<AblationRow> run_ablation(const ExperimentConfig& c, const std::vector<std::string>& variants,
                                      bool reuse = true);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace esi::cli
