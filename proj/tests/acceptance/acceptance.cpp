// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "esi/cli/experiment.hpp"
#include "esi/eval/metrics.hpp"
#include "esi/eval/sloreta.hpp"
#include "esi/fair/model.hpp"
#include "esi/geometry.hpp"
#include "esi/nmm.hpp"
#include "esi/nn/fft.hpp"
#include "esi/tensor_io.hpp"
#include "grad_suite.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace esi;
using esi::testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_text_file(e.path());
    return files;
}

double realized_snr_db(const Tensor& clean, const Tensor& noisy) {
    return 10.0 * std::log10(clean.sum_squares() / (noisy - clean).sum_squares());
}

Outcome gradient_integrity() {
    const auto t0 = Clock::now();
    double worst_primitive = 0.0;
    std::string worst_name;
    for (const auto& r : checks::primitive_grad_errors()) {
        if (r.error > worst_primitive || worst_name.empty()) {
            worst_primitive = r.error;
            worst_name = r.name;
        }
    }
    const auto cfg = checks::toy_model_config();
    fair::FairModel model(cfg, 11);
    Rng rng(12);
    const Tensor X = random_tensor({cfg.n_channels, cfg.n_timepoints}, rng);
    const Tensor S = random_tensor({cfg.n_regions, cfg.n_timepoints}, rng);
    const double end_to_end = checks::model_grad_error(model, X, S, 1e-4);
    const double elapsed = seconds_since(t0);
    return {worst_primitive < 1e-4 && end_to_end < 1e-3 && elapsed < 120.0,
            fmt("max primitive rel err %.2e (%s), end-to-end %.2e, %.1f s", worst_primitive, worst_name.c_str(),
                end_to_end, elapsed)};
}

Outcome fft_correctness() {
    Rng rng(21);
    double round_trip = 0.0, dft = 0.0, parseval = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(16);
        for (double& v : x) v = rng.normal();
        const auto spec = nn::fft(x);
        const auto back = nn::ifft(spec).real;
        const auto oracle = esi::testing::naive_dft(x);
        double time_energy = 0.0, freq_energy = 0.0;
        for (std::size_t k = 0; k < 16; ++k) {
            round_trip = std::max(round_trip, std::abs(back[k] - x[k]));
            dft = std::max(dft, std::abs(std::complex<double>(spec.re[k], spec.im[k]) - oracle[k]));
            time_energy += x[k] * x[k];
            freq_energy += spec.re[k] * spec.re[k] + spec.im[k] * spec.im[k];
        }
        parseval = std::max(parseval, std::abs(time_energy - freq_energy / 16.0));
    }
    return {round_trip < 1e-10 && dft < 1e-9 && parseval < 1e-9,
            fmt("round trip %.2e, naive DFT %.2e, Parseval %.2e", round_trip, dft, parseval)};
}

Outcome forward_and_snr(bool& noise_deterministic) {
    const auto space = build_synthetic_source_space(64, 6, 1);
    const auto lf = build_lead_field(space, 32, 2);
    Rng rng(31);
    const Tensor S = random_tensor({64, 128}, rng);
    const Tensor X = project_forward(lf, S);
    double forward = 0.0;
    for (std::size_t c = 0; c < 32; ++c)
        for (std::size_t t = 0; t < 128; ++t) {
            double acc = 0.0;
            for (std::size_t s = 0; s < 64; ++s) acc += lf.matrix()(c, s) * S(s, t);
            forward = std::max(forward, std::abs(acc - X(c, t)));
        }

    const Tensor clean = random_tensor({32, 512}, rng);
    double snr_err = 0.0;
    noise_deterministic = true;
    for (double snr : {-5.0, 0.0, 5.0, 15.0, 30.0}) {
        const auto seed = static_cast<std::uint64_t>(500 + snr);
        const Tensor noisy = add_noise(clean, snr, seed);
        const Tensor stored = decode_tensor(encode_tensor(noisy));
        snr_err = std::max({snr_err, std::abs(realized_snr_db(clean, noisy) - snr),
                            std::abs(realized_snr_db(clean, stored) - snr)});
        noise_deterministic = noise_deterministic && encode_tensor(add_noise(clean, snr, seed)) == encode_tensor(noisy);
    }
    return {forward < 1e-6 && snr_err < 0.2,
            fmt("project_forward max err %.2e, max |SNR error| %.4f dB on %zu-entry fragments", forward, snr_err,
                clean.size())};
}

Outcome jansen_rit() {
    constexpr std::size_t n = 4096;
    constexpr double fs_hz = 250.0;
    std::vector<double> power(n / 2, 0.0);
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto spec = nn::fft(simulate_jansen_rit(JansenRitParams{}, n, fs_hz, seed));
        for (std::size_t k = 0; k < n / 2; ++k) power[k] += spec.re[k] * spec.re[k] + spec.im[k] * spec.im[k];
    }
    std::size_t peak = static_cast<std::size_t>(2.0 * n / fs_hz);
    for (std::size_t k = peak; k < n / 2; ++k)
        if (power[k] > power[peak]) peak = k;
    const double f_peak = static_cast<double>(peak) * fs_hz / n;

    JansenRitParams fine;
    fine.dt /= 2.0;
    double worst = 0.0;
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const auto a = simulate_jansen_rit(JansenRitParams{}, 250, fs_hz, seed);
        const auto b = simulate_jansen_rit(fine, 250, fs_hz, seed);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            num += (a[i] - b[i]) * (a[i] - b[i]);
            den += b[i] * b[i];
        }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return {f_peak >= 8.0 && f_peak <= 12.0 && worst < 0.01,
            fmt("spectral peak %.2f Hz, dt-halving relative L2 %.2e", f_peak, worst)};
}

double centroid_distance(const Vec3& a, const Vec3& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

Outcome metric_oracles() {
    Rng rng(41);
    std::size_t set_mismatch = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Vec3> c(8);
        for (auto& p : c) p = {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
        std::vector<std::vector<std::size_t>> adj(8);
        for (std::size_t i = 0; i + 1 < 8; ++i) {
            adj[i].push_back(i + 1);
            adj[i + 1].push_back(i);
        }
        const SourceSpace space(c, adj);

        Tensor S = random_tensor({8, 5}, rng);
        for (std::size_t j = 0; j < 8; ++j)
            if (rng.uniform() < 0.4)
                for (std::size_t t = 0; t < 5; ++t) S(j, t) = 0.0;
        S(rng.below(8), 0) += 3.0;
        std::vector<std::size_t> gt_regions, est_regions;
        for (std::size_t j = 0; j < 8; ++j) {
            if (rng.uniform() < 0.3) gt_regions.push_back(j);
            if (rng.uniform() < 0.3) est_regions.push_back(j);
        }
        if (gt_regions.empty()) gt_regions.push_back(rng.below(8));
        const RegionSet gt(gt_regions), est(est_regions);

        std::size_t hit = 0;
        for (std::size_t j : est_regions)
            hit += std::count(gt_regions.begin(), gt_regions.end(), j);
        const auto pr = eval::precision_recall(est, gt);
        set_mismatch += pr.precision != (est_regions.empty() ? 0.0 : 100.0 * hit / est_regions.size());
        set_mismatch += pr.recall != 100.0 * hit / gt_regions.size();

        std::vector<double> e(8, 0.0), d(8, 1e300);
        for (std::size_t j = 0; j < 8; ++j) {
            for (std::size_t t = 0; t < 5; ++t) e[j] += S(j, t) * S(j, t);
            for (std::size_t g : gt_regions) d[j] = std::min(d[j], centroid_distance(c[j], c[g]));
        }
        const std::size_t peak = std::max_element(e.begin(), e.end()) - e.begin();
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
            num += d[j] * d[j] * e[j];
            den += e[j];
        }
        const Tensor T = random_tensor({8, 5}, rng);
        double err = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < S.size(); ++i) {
            err += (S[i] - T[i]) * (S[i] - T[i]);
            ref += T[i] * T[i];
        }
        worst = std::max({worst, std::abs(eval::localization_error(S, gt, space) - d[peak]),
                          std::abs(eval::spatial_dispersion(S, gt, space) - std::sqrt(num / den)),
                          std::abs(eval::nmse(S, T) - err / ref)});
    }

    const auto space = build_synthetic_source_space(16, 3, 4);
    PairedSample sample;
    sample.S = Tensor({16, 32});
    for (std::size_t t = 0; t < 32; ++t) sample.S(5, t) = sample.S(6, t) = std::sin(0.3 * (t + 1.0));
    sample.ground_truth = {RegionSet({5, 6})};
    const auto perfect = eval::evaluate(sample.S, sample, space);
    const bool perfect_ok = perfect.precision == 100.0 && perfect.recall == 100.0 && perfect.le_mm == 0.0 &&
                            perfect.sd_mm == 0.0 && perfect.nmse == 0.0;
    return {set_mismatch == 0 && worst < 1e-9 && perfect_ok,
            fmt("set-metric mismatches %zu, max distance/energy err %.2e, perfect = (%g, %g, %g, %g, %g)",
                set_mismatch, worst, perfect.precision, perfect.recall, perfect.le_mm.value_or(NAN),
                perfect.sd_mm.value_or(NAN), perfect.nmse)};
}

Outcome sloreta_zero_error() {
    Rng rng(61);
    std::size_t correct = 0;
    for (std::size_t trial = 0; trial < 100; ++trial) {
        const std::size_t n = 8 + trial * 56 / 99;
        const std::size_t channels = std::max<std::size_t>(4, n / 2);
        const auto space = build_synthetic_source_space(n, std::min<std::size_t>(6, n - 1), 1000 + trial);
        const auto lf = build_lead_field(space, channels, 2000 + trial);
        const std::size_t source = rng.below(n);
        Tensor S({n, 64});
        const auto wave = simulate_jansen_rit(JansenRitParams{}, 64, 250.0, 3000 + trial);
        for (std::size_t t = 0; t < 64; ++t) S(source, t) = wave[t];
        const Tensor estimate = eval::sloreta_solve(lf, project_forward(lf, S));
        correct += eval::peak_region(estimate) == source;
    }
    return {correct == 100, fmt("%zu/100 noiseless single-source trials localized exactly (8-64 regions)", correct)};
}

struct ToyRun {
    fs::path out;
    fs::path manifest;
    fs::path log;
    double simulate_s = 0.0;
    double train_s = 0.0;
    bool simulated = false;
    bool trained = false;
};

ToyRun run_pipeline(cli::ExperimentConfig c, const fs::path& out, bool reuse) {
    c.paths.out = out;
    ToyRun run{out, c.manifest_path(), out / "train" / "train_log.csv"};
    auto t0 = Clock::now();
    if (!(reuse && fs::exists(run.manifest))) {
        cli::cmd_simulate(c);
        run.simulated = true;
    }
    run.simulate_s = seconds_since(t0);
    t0 = Clock::now();
    const bool complete =
        fs::exists(run.log) && fair::read_training_log(run.log).size() >= c.training.epochs;
    if (!(reuse && complete)) {
        cli::cmd_train(c);
        run.trained = true;
    }
    run.train_s = seconds_since(t0);
    return run;
}

Outcome toy_experiment(const cli::ExperimentConfig& c, const ToyRun& run) {
    const auto manifest = load_manifest(run.manifest);
    const std::size_t n_train = manifest.select(Split::train).size();
    const std::size_t n_val = manifest.select(Split::val).size();
    const std::size_t n_test = manifest.select(Split::test).size();

    cli::ExperimentConfig ce = c;
    ce.paths.out = run.out;
    const auto result = cli::cmd_eval(ce, {cli::Solver::fair, cli::Solver::sloreta});
    const auto& fair_s = result.solvers.at(0).summary;
    const auto& slor_s = result.solvers.at(1).summary;

    const auto log = fair::read_training_log(run.log);
    double best = log.at(0).val_loss;
    for (const auto& r : log) best = std::min(best, r.val_loss);
    const double first = log.at(0).val_loss;

    const bool dims_ok = c.geometry.n_regions == 64 && c.geometry.n_channels == 32 &&
                         c.simulation.n_timepoints == 128 && n_train == 600 && n_val == 60 && n_test == 60;
    const bool budget_ok = log.size() <= 50 && run.simulate_s + run.train_s < 3600.0;
    const bool a = fair_s.le_mm.n > 0 && fair_s.le_mm.mean <= slor_s.le_mm.mean;
    const bool b = fair_s.nmse.mean <= 0.5 * slor_s.nmse.mean;
    const bool cc = best <= 0.5 * first;
    std::ostringstream detail;
    detail << fmt("%zu/%zu/%zu samples, %zu epochs, simulate %.0f s + train %.0f s%s; ", n_train, n_val, n_test,
                  log.size(), run.simulate_s, run.train_s, run.trained ? "" : " (reused)")
           << fmt("(a) LE fair %.2f mm vs sLORETA %.2f mm [%s]; ", fair_s.le_mm.mean, slor_s.le_mm.mean,
                  a ? "ok" : "no")
           << fmt("(b) nMSE fair %.4f vs 0.5 x sLORETA %.4f [%s]; ", fair_s.nmse.mean, 0.5 * slor_s.nmse.mean,
                  b ? "ok" : "no")
           << fmt("(c) best val %.4f vs 0.5 x epoch-1 val %.4f [%s]", best, 0.5 * first, cc ? "ok" : "no");
    if (fair_s.le_mm.excluded) detail << fmt("; %zu all-zero FAIR estimates excluded from LE", fair_s.le_mm.excluded);
    return {dims_ok && budget_ok && a && b && cc, detail.str()};
}

Outcome ablation(const cli::ExperimentConfig& c, const ToyRun& run) {
    cli::ExperimentConfig ca = c;
    ca.paths.out = run.out;
    const auto t0 = Clock::now();
    const auto rows = cli::run_ablation(ca, cli::kAblationVariants, true);
    const std::string table = cli::ablation_table(rows);
    std::printf("%s", table.c_str());
    const bool files = fs::exists(run.out / "ablation" / "ablation.csv") && fs::exists(run.out / "ablation" / "ablation.md");
    const bool full_reused = !rows.empty() && rows.front().variant == "full" && rows.front().reused;
    return {rows.size() == cli::kAblationVariants.size() && files && !table.empty(),
            fmt("%zu variants in %.0f s, full run %s, table at %s", rows.size(), seconds_since(t0),
                full_reused ? "reused" : "retrained", (run.out / "ablation" / "ablation.md").c_str())};
}

Outcome determinism(const cli::ExperimentConfig& c, const ToyRun& first, const fs::path& rerun_dir,
                    bool noise_deterministic) {
    const ToyRun second = run_pipeline(c, rerun_dir, false);
    const bool data_same = read_tree(first.manifest.parent_path()) == read_tree(second.manifest.parent_path());
    const bool log_same = read_text_file(first.log) == read_text_file(second.log);
    return {noise_deterministic && data_same && log_same,
            fmt("noise realizations %s, toy dataset %s, training log %s (rerun train %.0f s)",
                noise_deterministic ? "identical" : "DIFFER", data_same ? "byte-identical" : "DIFFERS",
                log_same ? "byte-identical" : "DIFFERS", second.train_s)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string config_path = ESI_TOY_CONFIG;
    std::string work = "acceptance_work";
    bool reuse = false;
    app.add_option("--config", config_path, "Toy experiment config");
    app.add_option("--work", work, "Scratch directory for the toy runs");
    app.add_flag("--reuse", reuse, "Keep an existing scratch directory and skip finished steps");
    CLI11_PARSE(app, argc, argv);

    const fs::path work_dir = fs::absolute(work);
    if (!reuse) fs::remove_all(work_dir);
    fs::create_directories(work_dir);

    int failures = 0;
    auto report = [&](int id, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("CRITERION %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    };

    bool noise_deterministic = false;
    report(1, gradient_integrity);
    report(2, fft_correctness);
    report(3, [&] { return forward_and_snr(noise_deterministic); });
    report(4, jansen_rit);
    report(5, metric_oracles);
    report(6, sloreta_zero_error);

    const auto config = cli::load_experiment_config(config_path);
    ToyRun run;
    std::string pipeline_error;
    try {
        run = run_pipeline(config, work_dir / "toy", reuse);
    } catch (const std::exception& e) {
        pipeline_error = e.what();
    }
    auto needs_run = [&](std::function<Outcome()> f) {
        return [f, &pipeline_error]() -> Outcome {
            if (!pipeline_error.empty()) return {false, "toy pipeline failed: " + pipeline_error};
            return f();
        };
    };
    report(7, needs_run([&] { return toy_experiment(config, run); }));
    report(8, needs_run([&] { return ablation(config, run); }));
    report(9, needs_run([&] { return determinism(config, run, work_dir / "toy_rerun", noise_deterministic); }));

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
