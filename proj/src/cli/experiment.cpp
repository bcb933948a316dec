#include "esi/cli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>

#include "esi/error.hpp"
#include "esi/eval/sloreta.hpp"
#include "esi/parallel.hpp"
#include "esi/rng.hpp"
#include "esi/tensor_io.hpp"

namespace esi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum SeedStream : std::uint64_t { kGeometry = 1, kLeadField = 2, kModel = 3, kTraining = 4, kCellBase = 100 };

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
}

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
    throw ParameterError("unknown key '" + key + "' in " + where);
}

fs::path resolve(const json& value, const fs::path& base) {
    fs::path p = value.get<std::string>();
    if (p.empty()) throw ParameterError("empty path in config");
    return (p.is_absolute() || base.empty() ? p : base / p).lexically_normal();
}

GeometrySection parse_geometry(const json& j) {
    require_object(j, "geometry");
    GeometrySection g;
    for (const auto& [key, value] : j.items()) {
        if (key == "n_regions") g.n_regions = value.get<std::size_t>();
        else if (key == "k_neighbors") g.k_neighbors = value.get<std::size_t>();
        else if (key == "n_channels") g.n_channels = value.get<std::size_t>();
        else unknown_key("geometry", key);
    }
    if (g.n_regions < 8) throw ParameterError("geometry.n_regions must be >= 8");
    if (g.k_neighbors == 0 || g.k_neighbors >= g.n_regions)
        throw ParameterError("geometry.k_neighbors must be in [1, n_regions)");
    if (g.n_channels < 2) throw ParameterError("geometry.n_channels must be >= 2");
    return g;
}

SimulationConfig parse_cell(const json& j, std::size_t index) {
    const std::string where = "simulation.grid[" + std::to_string(index) + "]";
    require_object(j, where);
    for (const auto& [key, value] : j.items())
        if (key != "snr_db" && key != "n_sources" && key != "extent") unknown_key(where, key);
    return simulation_config_from_json(j);
}

SimulationSection parse_simulation(const json& j) {
    require_object(j, "simulation");
    SimulationSection s;
    json grid = json::array({json::object()});
    for (const auto& [key, value] : j.items()) {
        if (key == "grid") grid = value;
        else if (key == "samples_per_cell") s.samples_per_cell = value.get<std::size_t>();
        else if (key == "n_timepoints") s.n_timepoints = value.get<std::size_t>();
        else if (key == "sample_rate") s.sample_rate = value.get<double>();
        else if (key == "preset") s.preset = value.get<std::string>();
        else if (key == "jansen_rit") s.jansen_rit = value;
        else if (key == "jitter") s.jitter = jitter_from_json(value);
        else unknown_key("simulation", key);
    }
    if (!grid.is_array() || grid.empty()) throw ParameterError("simulation.grid must be a non-empty array");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        SimulationConfig cell = parse_cell(grid[i], i);
        cell.n_timepoints = s.n_timepoints;
        cell.sample_rate = s.sample_rate;
        cell.validate();
        s.grid.push_back(cell);
    }
    if (s.samples_per_cell == 0) throw ParameterError("simulation.samples_per_cell must be positive");
    require_object(s.jansen_rit, "simulation.jansen_rit");
    return s;
}

EvaluationSection parse_evaluation(const json& j) {
    require_object(j, "evaluation");
    EvaluationSection e;
    for (const auto& [key, value] : j.items()) {
        if (key == "active_fraction") e.active_fraction = value.get<double>();
        else if (key == "sloreta_lambda") e.sloreta_lambda = value.get<double>();
        else unknown_key("evaluation", key);
    }
    if (!(e.active_fraction > 0.0 && e.active_fraction <= 1.0))
        throw ParameterError("evaluation.active_fraction must be in (0, 1]");
    if (!(e.sloreta_lambda >= 0.0) || !std::isfinite(e.sloreta_lambda))
        throw ParameterError("evaluation.sloreta_lambda must be finite and >= 0");
    return e;
}

PathsSection parse_paths(const json& j, const fs::path& base) {
    require_object(j, "paths");
    PathsSection p;
    for (const auto& [key, value] : j.items()) {
        if (key == "out") p.out = resolve(value, base);
        else if (key == "manifest") p.manifest = resolve(value, base);
        else if (key == "checkpoint") p.checkpoint = resolve(value, base);
        else if (key == "fragment") p.fragment = resolve(value, base);
        else unknown_key("paths", key);
    }
    return p;
}

void check_model_dims(const fair::FairConfig& m, const ExperimentConfig& c) {
    auto check = [](std::size_t got, std::size_t want, const char* what) {
        if (got != want)
            throw ParameterError(std::string("model.") + what + " = " + std::to_string(got) + " disagrees with " +
                                 std::to_string(want) + " from geometry/simulation");
    };
    check(m.n_channels, c.geometry.n_channels, "n_channels");
    check(m.n_regions, c.geometry.n_regions, "n_regions");
    check(m.n_timepoints, c.simulation.n_timepoints, "n_timepoints");
}

fs::path require_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw ParameterError("checkpoint not found: " + dir.string() + " (run `esi train` or set paths.checkpoint)");
    return dir;
}

fair::FairModel load_checkpoint(const ExperimentConfig& c, const fs::path& dir) {
    require_checkpoint(dir);
    fair::FairModel model = fair::FairModel::load(dir);
    check_model_dims(model.config(), c);
    return model;
}

Manifest load_experiment_manifest(const ExperimentConfig& c) {
    const fs::path path = c.manifest_path();
    if (!fs::exists(path)) throw IoError("manifest not found: " + path.string() + " (run `esi simulate` first)");
    return load_manifest(path);
}

std::vector<fair::Example> to_examples(const Manifest& manifest, Split split) {
    auto data = fair::load_split(manifest, split);
    if (data.empty()) throw DataError("the " + to_string(split) + " split of " + manifest.directory.string() + " is empty");
    return data;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string summary_cell(const eval::MetricSummary& s, const char* f) {
    if (std::isnan(s.mean)) return "n/a";
    return fmt(f, s.mean) + " ± " + fmt(f, s.std);
}

std::size_t count_rows(const fs::path& log) {
    if (!fs::exists(log)) return 0;
    return fair::read_training_log(log).size();
}

double best_logged_val(const fs::path& log) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : fair::read_training_log(log)) best = std::min(best, r.val_loss);
    return best;
}

bool completed_run(const fs::path& dir, const fair::FairConfig& model, std::size_t epochs) {
    if (count_rows(dir / "train_log.csv") < epochs || !fs::exists(dir / "best")) return false;
    try {
        return fair::to_json(fair::FairModel::load(dir / "best").config()) == fair::to_json(model);
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

fs::path ExperimentConfig::out_dir() const { return paths.out.empty() ? fs::path("runs") : paths.out; }

fs::path ExperimentConfig::manifest_path() const {
    return paths.manifest.empty() ? out_dir() / "data" / "manifest.json" : paths.manifest;
}

fs::path ExperimentConfig::checkpoint_path() const {
    return paths.checkpoint.empty() ? out_dir() / "train" / "best" : paths.checkpoint;
}

JansenRitParams ExperimentConfig::jansen_rit_params() const {
    return jansen_rit_from_json(simulation.jansen_rit, jansen_rit_preset(simulation.preset));
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
    require_object(j, "config");
    ExperimentConfig c;
    json model = json::object(), training = json::object();
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "$schema") continue;
            if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "geometry") c.geometry = parse_geometry(value);
            else if (key == "simulation") c.simulation = parse_simulation(value);
            else if (key == "model") model = value;
            else if (key == "training") training = value;
            else if (key == "evaluation") c.evaluation = parse_evaluation(value);
            else if (key == "paths") c.paths = parse_paths(value, base_dir);
            else unknown_key("config", key);
        }
        if (!j.contains("simulation")) c.simulation = parse_simulation(json::object());
        require_object(model, "model");
        require_object(training, "training");
        if (training.contains("seed")) throw ParameterError("training.seed is derived from the top-level seed");

        fair::FairConfig base;
        base.n_channels = c.geometry.n_channels;
        base.n_regions = c.geometry.n_regions;
        base.n_timepoints = c.simulation.n_timepoints;
        c.model = fair::fair_config_from_json(model, base);
        check_model_dims(c.model, c);
        c.training = fair::training_config_from_json(training);
    } catch (const json::exception& e) {
        throw ParameterError(std::string("invalid config value: ") + e.what());
    }
    set_seed(c, c.seed);
    c.jansen_rit_params().validate();
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParameterError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
    json grid = json::array();
    for (const auto& cell : c.simulation.grid) {
        const json full = to_json(cell);
        grid.push_back({{"snr_db", full.at("snr_db")}, {"n_sources", cell.n_sources}, {"extent", cell.extent}});
    }
    json training = fair::to_json(c.training);
    training.erase("seed");
    json paths = json::object();
    if (!c.paths.out.empty()) paths["out"] = c.paths.out.generic_string();
    if (!c.paths.manifest.empty()) paths["manifest"] = c.paths.manifest.generic_string();
    if (!c.paths.checkpoint.empty()) paths["checkpoint"] = c.paths.checkpoint.generic_string();
    if (!c.paths.fragment.empty()) paths["fragment"] = c.paths.fragment.generic_string();
    return {{"seed", c.seed},
            {"geometry",
             {{"n_regions", c.geometry.n_regions},
              {"k_neighbors", c.geometry.k_neighbors},
              {"n_channels", c.geometry.n_channels}}},
            {"simulation",
             {{"grid", grid},
              {"samples_per_cell", c.simulation.samples_per_cell},
              {"n_timepoints", c.simulation.n_timepoints},
              {"sample_rate", c.simulation.sample_rate},
              {"preset", c.simulation.preset},
              {"jansen_rit", c.simulation.jansen_rit},
              {"jitter", to_json(c.simulation.jitter)}}},
            {"model", fair::to_json(c.model)},
            {"training", training},
            {"evaluation",
             {{"active_fraction", c.evaluation.active_fraction}, {"sloreta_lambda", c.evaluation.sloreta_lambda}}},
            {"paths", paths}};
}

void set_seed(ExperimentConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.training.seed = derive_seed(seed, kTraining);
}

std::uint64_t geometry_seed(const ExperimentConfig& c) { return derive_seed(c.seed, kGeometry); }
std::uint64_t lead_field_seed(const ExperimentConfig& c) { return derive_seed(c.seed, kLeadField); }
std::uint64_t cell_seed(const ExperimentConfig& c, std::size_t cell) { return derive_seed(c.seed, kCellBase + cell); }
std::uint64_t model_seed(const ExperimentConfig& c) { return derive_seed(c.seed, kModel); }

SourceSpace build_source_space(const ExperimentConfig& c) {
    return build_synthetic_source_space(c.geometry.n_regions, c.geometry.k_neighbors, geometry_seed(c));
}

SimulateResult cmd_simulate(const ExperimentConfig& c) {
    const SourceSpace space = build_source_space(c);
    const LeadField lf = build_lead_field(space, c.geometry.n_channels, lead_field_seed(c));
    DatasetRequest request;
    request.grid = c.simulation.grid;
    for (std::size_t i = 0; i < request.grid.size(); ++i) request.grid[i].seed = cell_seed(c, i);
    request.n_samples = c.simulation.samples_per_cell;
    request.params = c.jansen_rit_params();
    request.jitter = c.simulation.jitter;

    const fs::path dir = c.paths.manifest.empty() ? c.out_dir() / "data" : c.paths.manifest.parent_path();
    SimulateResult result;
    result.manifest = generate_dataset(space, lf, request, dir);
    const json entries = json::parse(read_text_file(result.manifest));
    result.samples_per_cell.assign(request.grid.size(), 0);
    for (const auto& e : entries) ++result.samples_per_cell.at(e.at("cell").get<std::size_t>());
    return result;
}

fair::TrainingResult cmd_train(const ExperimentConfig& c, bool resume) {
    const Manifest manifest = load_experiment_manifest(c);
    const auto train_set = to_examples(manifest, Split::train);
    const auto val_set = to_examples(manifest, Split::val);
    fair::FairModel model(c.model, model_seed(c));
    const fs::path out = c.out_dir() / "train";
    if (resume && !fs::exists(out / "last"))
        throw ParameterError("cannot resume: no checkpoint at " + (out / "last").string());
    return fair::train(model, train_set, val_set, c.training, out, resume);
}

std::string to_string(Solver s) { return s == Solver::fair ? "fair" : "sloreta"; }

Solver solver_from_string(const std::string& s) {
    if (s == "fair") return Solver::fair;
    if (s == "sloreta") return Solver::sloreta;
    throw ParameterError("unknown solver '" + s + "' (expected fair or sloreta)");
}

SolverEvaluation evaluate_split(const ExperimentConfig& c, Solver solver, const Manifest& manifest,
                                const fs::path& checkpoint) {
    const auto entries = manifest.select(Split::test);
    if (entries.empty()) throw DataError("the test split of " + manifest.directory.string() + " is empty");
    const SourceSpace space = load_source_space(manifest.source_space_path());

    std::function<Tensor(const Tensor&)> estimate;
    std::optional<fair::FairModel> model;
    std::optional<eval::SloretaSolver> sloreta;
    if (solver == Solver::fair) {
        model.emplace(load_checkpoint(c, checkpoint));
        if (model->config().n_regions != space.n_regions())
            throw ParameterError("checkpoint estimates " + std::to_string(model->config().n_regions) +
                                 " regions but the dataset has " + std::to_string(space.n_regions()));
        estimate = [&](const Tensor& X) { return model->forward(X); };
    } else {
        sloreta.emplace(load_lead_field(manifest.lead_field_path()), c.evaluation.sloreta_lambda);
        estimate = [&](const Tensor& X) { return sloreta->solve(X); };
    }

    SolverEvaluation result;
    result.solver = solver;
    result.reports.resize(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        const PairedSample sample = load_sample(entries[i].path);
        result.reports[i] = eval::evaluate(estimate(sample.X), sample, space, c.evaluation.active_fraction);
    });
    for (const auto& e : entries) result.sample_ids.push_back(e.path.stem().string());
    result.summary = eval::aggregate(result.reports);
    return result;
}

EvalResult cmd_eval(const ExperimentConfig& c, const std::vector<Solver>& solvers) {
    if (solvers.empty()) throw ParameterError("no solver selected");
    const Manifest manifest = load_experiment_manifest(c);
    const fs::path out = c.out_dir() / "eval";
    fs::create_directories(out);

    EvalResult result;
    json summary = {{"split", "test"}, {"active_fraction", c.evaluation.active_fraction}, {"solvers", json::object()}};
    for (Solver s : solvers) {
        auto ev = evaluate_split(c, s, manifest, c.checkpoint_path());
        write_text_file(out / (to_string(s) + "_samples.csv"), eval::reports_to_csv(ev.reports, ev.sample_ids));
        json block = eval::to_json(ev.summary);
        block["n_samples"] = ev.reports.size();
        if (s == Solver::sloreta) block["lambda"] = c.evaluation.sloreta_lambda;
        summary["solvers"][to_string(s)] = block;
        result.solvers.push_back(std::move(ev));
    }
    result.summary_path = out / "summary.json";
    write_text_file(result.summary_path, summary.dump(2) + "\n");
    return result;
}

std::string render_topography_svg(const SourceSpace& space, const Tensor& estimate) {
    if (estimate.rank() != 2 || estimate.dim(0) != space.n_regions())
        throw ParameterError("topography: estimate has " + dims_to_string(estimate.dims()) + " but the source space has " +
                             std::to_string(space.n_regions()) + " regions");
    const auto energy = eval::region_energy(estimate);
    const double peak = *std::max_element(energy.begin(), energy.end());
    double radius = 0.0;
    for (std::size_t r = 0; r < space.n_regions(); ++r) {
        const Vec3& p = space.centroid(r);
        radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
    }
    if (radius == 0.0) radius = 1.0;

    constexpr double panel = 220.0, half = 100.0, disc = 5.0;
    const double scale = (half - 2.0 * disc) / radius;
    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"440\" height=\"250\" viewBox=\"0 0 440 250\">\n";
    svg += "<rect width=\"440\" height=\"250\" fill=\"white\"/>\n";
    char buf[256];
    for (int view = 0; view < 2; ++view) {
        const double cx = panel * view + panel / 2.0, cy = 120.0;
        std::snprintf(buf, sizeof buf,
                      "<g id=\"%s\">\n<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"none\" stroke=\"black\"/>\n"
                      "<text x=\"%.2f\" y=\"240\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                      "font-size=\"12\">%s</text>\n",
                      view == 0 ? "superior" : "inferior", cx, cy, half, cx, view == 0 ? "superior" : "inferior");
        svg += buf;
        for (std::size_t r = 0; r < space.n_regions(); ++r) {
            const Vec3& p = space.centroid(r);
            if ((view == 0) != (p[2] >= 0.0)) continue;
            // Inferior view is seen from below, so x is mirrored.
            const double x = cx + (view == 0 ? p[0] : -p[0]) * scale, y = cy - p[1] * scale;
            std::string fill = "#9e9e9e";
            if (peak > 0.0 && energy[r] > 0.0) {
                const double t = energy[r] / peak;
                std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(255 - 66 * t)),
                              static_cast<int>(std::lround(255 * (1 - t))), static_cast<int>(std::lround(178 - 140 * t)));
                fill = buf;
            }
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.1f\" fill=\"%s\" stroke=\"#444444\" "
                          "stroke-width=\"0.5\" data-region=\"%zu\" data-energy=\"%.6g\"/>\n",
                          x, y, disc, fill.c_str(), r, energy[r]);
            svg += buf;
        }
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

LocalizeResult cmd_localize(const ExperimentConfig& c, Solver solver) {
    if (c.paths.fragment.empty()) throw ParameterError("no fragment given (set paths.fragment or pass --fragment)");
    const Tensor X = load_tensor(c.paths.fragment);
    if (X.rank() != 2 || X.dim(0) != c.geometry.n_channels)
        throw ParameterError("fragment " + dims_to_string(X.dims()) + " does not match " +
                             std::to_string(c.geometry.n_channels) + " channels");
    const SourceSpace space = build_source_space(c);
    Tensor S;
    if (solver == Solver::fair) {
        S = load_checkpoint(c, c.checkpoint_path()).forward(X);
    } else {
        const LeadField lf = build_lead_field(space, c.geometry.n_channels, lead_field_seed(c));
        S = eval::SloretaSolver(lf, c.evaluation.sloreta_lambda).solve(X);
    }
    const fs::path out = c.out_dir() / "localize";
    fs::create_directories(out);
    LocalizeResult result{out / "estimate.esit", out / "topography.svg"};
    save_tensor(S, result.estimate);
    write_text_file(result.svg, render_topography_svg(space, S));
    return result;
}

fair::FairConfig ablation_variant(fair::FairConfig base, const std::string& variant) {
    if (variant == "full") return base;
    if (variant == "no_spectral") base.use_spectral = false;
    else if (variant == "no_temporal") base.use_temporal = false;
    else if (variant == "no_patch") base.use_patch = false;
    else throw ParameterError("unknown ablation variant '" + variant + "'");
    return base;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& c, const std::vector<std::string>& variants, bool reuse) {
    const Manifest manifest = load_experiment_manifest(c);
    std::vector<fair::Example> train_set, val_set;
    const fs::path root = c.out_dir() / "ablation";
    std::vector<AblationRow> rows;
    for (const auto& name : variants) {
        ExperimentConfig vc = c;
        vc.model = ablation_variant(c.model, name);
        AblationRow row;
        row.variant = name;
        fs::path dir = root / name;
        // The full model is the main training run; reuse it when it finished with this config.
        if (reuse && name == "full" && !completed_run(dir, vc.model, c.training.epochs) &&
            completed_run(c.out_dir() / "train", vc.model, c.training.epochs))
            dir = c.out_dir() / "train";
        if (reuse && completed_run(dir, vc.model, c.training.epochs)) {
            row.reused = true;
        } else {
            if (train_set.empty()) {
                train_set = to_examples(manifest, Split::train);
                val_set = to_examples(manifest, Split::val);
            }
            fair::FairModel model(vc.model, model_seed(c));
            fair::train(model, train_set, val_set, c.training, dir);
        }
        row.epochs = count_rows(dir / "train_log.csv");
        row.best_val_loss = best_logged_val(dir / "train_log.csv");
        row.summary = evaluate_split(vc, Solver::fair, manifest, dir / "best").summary;
        rows.push_back(std::move(row));
    }
    fs::create_directories(root);
    std::string csv = "variant,epochs,best_val_loss,precision,recall,le_mm,sd_mm,nmse\n";
    for (const auto& r : rows) {
        auto mean = [](const eval::MetricSummary& s) { return std::isnan(s.mean) ? std::string() : fmt("%.9g", s.mean); };
        csv += r.variant + "," + std::to_string(r.epochs) + "," + fmt("%.9g", r.best_val_loss) + "," +
               mean(r.summary.precision) + "," + mean(r.summary.recall) + "," + mean(r.summary.le_mm) + "," +
               mean(r.summary.sd_mm) + "," + mean(r.summary.nmse) + "\n";
    }
    write_text_file(root / "ablation.csv", csv);
    write_text_file(root / "ablation.md", ablation_table(rows));
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::string md =
        "| variant | epochs | best val loss | precision (%) | recall (%) | LE (mm) | SD (mm) | nMSE |\n"
        "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        md += "| " + r.variant + " | " + std::to_string(r.epochs) + " | " + fmt("%.4f", r.best_val_loss) + " | " +
              summary_cell(r.summary.precision, "%.1f") + " | " + summary_cell(r.summary.recall, "%.1f") + " | " +
              summary_cell(r.summary.le_mm, "%.2f") + " | " + summary_cell(r.summary.sd_mm, "%.2f") + " | " +
              summary_cell(r.summary.nmse, "%.4f") + " |\n";
    }
    return md;
}

}  // namespace esi::cli
