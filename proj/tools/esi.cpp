// esi: simulate, train, evaluate and localize from one JSON experiment config.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "esi/cli/experiment.hpp"
#include "esi/error.hpp"

namespace fs = std::filesystem;
using namespace esi;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommonOptions {
    std::string config;
    std::string out;
    std::string manifest;
    std::string checkpoint;
    std::string fragment;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)")->required();
    cmd->add_option("--out", o.out, "Output directory (overrides paths.out)");
    cmd->add_option("--seed", o.seed, "Top-level seed (overrides seed)");
    cmd->add_option("--manifest", o.manifest, "Dataset manifest (overrides paths.manifest)");
    cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint directory (overrides paths.checkpoint)");
    cmd->add_option("--fragment", o.fragment, "Sensor fragment tensor (overrides paths.fragment)");
}

cli::ExperimentConfig load(const CommonOptions& o) {
    auto c = cli::load_experiment_config(o.config);
    if (!o.out.empty()) c.paths.out = fs::absolute(o.out);
    if (!o.manifest.empty()) c.paths.manifest = fs::absolute(o.manifest);
    if (!o.checkpoint.empty()) c.paths.checkpoint = fs::absolute(o.checkpoint);
    if (!o.fragment.empty()) c.paths.fragment = fs::absolute(o.fragment);
    if (o.seed) cli::set_seed(c, *o.seed);
    return c;
}

std::string mean_std(const eval::MetricSummary& s) {
    char buf[64];
    if (std::isnan(s.mean)) return "n/a";
    std::snprintf(buf, sizeof buf, "%.4g ± %.4g", s.mean, s.std);
    return buf;
}

void print_summary(const cli::SolverEvaluation& ev) {
    const auto& s = ev.summary;
    std::printf("%-8s n=%zu  precision %s  recall %s  LE %s mm  SD %s mm  nMSE %s", cli::to_string(ev.solver).c_str(),
                ev.reports.size(), mean_std(s.precision).c_str(), mean_std(s.recall).c_str(),
                mean_std(s.le_mm).c_str(), mean_std(s.sd_mm).c_str(), mean_std(s.nmse).c_str());
    if (s.le_mm.excluded) std::printf("  (%zu undefined LE/SD)", s.le_mm.excluded);
    std::printf("\n");
}

std::vector<cli::Solver> parse_solvers(const std::vector<std::string>& names) {
    std::vector<cli::Solver> out;
    for (const auto& n : names) {
        const auto s = cli::solver_from_string(n);
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Electrophysiological source imaging toolkit"};
    app.require_subcommand(1);

    CommonOptions sim_opts, train_opts, eval_opts, loc_opts, abl_opts;
    bool resume = false, no_reuse = false;
    std::vector<std::string> eval_solvers{"fair"}, variants;
    std::string loc_solver = "fair";

    auto* simulate = app.add_subcommand("simulate", "Generate the paired dataset for every grid cell");
    add_common(simulate, sim_opts);
    auto* train = app.add_subcommand("train", "Train the model on the train/val splits");
    add_common(train, train_opts);
    train->add_flag("--resume", resume, "Continue from <out>/train/last");
    auto* evaluate = app.add_subcommand("eval", "Score solvers on the test split");
    add_common(evaluate, eval_opts);
    evaluate->add_option("--solver", eval_solvers, "fair and/or sloreta (repeatable)")->capture_default_str();
    auto* localize = app.add_subcommand("localize", "Estimate sources for one fragment and render a topography");
    add_common(localize, loc_opts);
    localize->add_option("--solver", loc_solver, "fair or sloreta")->capture_default_str();
    auto* ablate = app.add_subcommand("ablate", "Retrain with each refinement view disabled and compare");
    add_common(ablate, abl_opts);
    ablate->add_option("--variant", variants, "full, no_spectral, no_temporal, no_patch (repeatable)");
    ablate->add_flag("--no-reuse", no_reuse, "Retrain variants even when a finished run exists");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*simulate) {
            const auto c = load(sim_opts);
            const auto r = cli::cmd_simulate(c);
            for (std::size_t i = 0; i < r.samples_per_cell.size(); ++i) {
                const auto& cell = c.simulation.grid[i];
                std::printf("cell %zu (snr_db=%g, n_sources=%zu, extent=%zu): %zu samples\n", i, cell.snr_db,
                            cell.n_sources, cell.extent, r.samples_per_cell[i]);
            }
            std::printf("manifest: %s\n", r.manifest.string().c_str());
        } else if (*train) {
            const auto r = cli::cmd_train(load(train_opts), resume);
            for (const auto& e : r.log)
                std::printf("epoch %3zu  train %.6g  val %.6g  lr %.3g\n", e.epoch, e.train_loss, e.val_loss,
                            e.learning_rate);
            std::printf("best val loss %.6g at epoch %zu (initial %.6g)\n", r.best_val_loss, r.best_epoch,
                        r.initial_val_loss);
            std::printf("checkpoint: %s\nlog: %s\n", r.best_checkpoint.string().c_str(), r.log_path.string().c_str());
        } else if (*evaluate) {
            const auto r = cli::cmd_eval(load(eval_opts), parse_solvers(eval_solvers));
            for (const auto& ev : r.solvers) print_summary(ev);
            std::printf("summary: %s\n", r.summary_path.string().c_str());
        } else if (*localize) {
            const auto r = cli::cmd_localize(load(loc_opts), cli::solver_from_string(loc_solver));
            std::printf("estimate: %s\nsvg: %s\n", r.estimate.string().c_str(), r.svg.string().c_str());
        } else if (*ablate) {
            const auto c = load(abl_opts);
            const auto rows = cli::run_ablation(c, variants.empty() ? cli::kAblationVariants : variants, !no_reuse);
            std::printf("%s", cli::ablation_table(rows).c_str());
        }
    } catch (const ParameterError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kExitNumerical;
    } catch (const Error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
