#include "esi/fair/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "esi/error.hpp"
#include "esi/parallel.hpp"
#include "esi/rng.hpp"
#include "esi/tensor_io.hpp"

namespace esi::fair {

namespace fs = std::filesystem;

void TrainingConfig::validate() const {
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be >= 0");
    if (!(min_learning_rate > 0.0) || min_learning_rate > learning_rate) {
        throw ParameterError("min_learning_rate must be in (0, learning_rate]");
    }
    if (patience < 1) throw ParameterError("patience must be >= 1");
    if (!(plateau_threshold >= 0.0)) throw ParameterError("plateau_threshold must be >= 0");
}

nlohmann::json to_json(const TrainingConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"min_learning_rate", c.min_learning_rate},
            {"patience", c.patience},
            {"plateau_threshold", c.plateau_threshold},
            {"seed", c.seed}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig c) {
    if (!j.is_object()) throw ParameterError("training config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "min_learning_rate") c.min_learning_rate = v.get<double>();
            else if (key == "patience") c.patience = v.get<std::size_t>();
            else if (key == "plateau_threshold") c.plateau_threshold = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else throw ParameterError("unknown training key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("invalid training config: ") + e.what());
    }
    c.validate();
    return c;
}

PlateauScheduler::PlateauScheduler(double threshold, std::size_t patience, double min_lr)
    : threshold_(threshold), patience_(patience), min_lr_(min_lr), best_(std::numeric_limits<double>::infinity()) {
    if (patience_ < 1) throw ParameterError("scheduler patience must be >= 1");
}

void PlateauScheduler::reset(double initial_loss) {
    best_ = initial_loss;
    stale_ = 0;
}

bool PlateauScheduler::observe(double val_loss, double& lr) {
    if (val_loss < best_ * (1.0 - threshold_)) {
        best_ = val_loss;
        stale_ = 0;
        return false;
    }
    if (++stale_ < patience_) return false;
    stale_ = 0;
    const double next = std::max(lr / 2.0, min_lr_);
    const bool changed = next < lr;
    lr = next;
    return changed;
}

nlohmann::json PlateauScheduler::state() const { return {{"best", best_}, {"stale_epochs", stale_}}; }

void PlateauScheduler::restore(const nlohmann::json& state) {
    best_ = state.at("best").get<double>();
    stale_ = state.at("stale_epochs").get<std::size_t>();
}

std::vector<Example> load_split(const Manifest& manifest, Split split) {
    const auto entries = manifest.select(split);
    std::vector<Example> out(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        auto s = load_sample(entries[i].path);
        out[i] = {std::move(s.X), std::move(s.S)};
    });
    return out;
}

namespace {

void require_data(const FairModel& model, const std::vector<Example>& data, const char* split) {
    if (data.empty()) throw DataError(std::string(split) + " split is empty");
    const auto& c = model.config();
    for (const auto& e : data) {
        if (e.X.dims() != Dims{c.n_channels, c.n_timepoints} || e.S.dims() != Dims{c.n_regions, c.n_timepoints}) {
            throw ParameterError(std::string(split) + " sample dims X " + dims_to_string(e.X.dims()) + ", S " +
                                 dims_to_string(e.S.dims()) + " do not match the model configuration");
        }
    }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 1000 + epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

void write_log(const fs::path& path, const std::vector<EpochRecord>& rows) {
    std::string text = std::string(kTrainLogHeader) + "\n";
    for (const auto& r : rows) text += format_log_row(r) + "\n";
    write_text_file(path, text);
}

}  // namespace

double mean_loss(const FairModel& model, const std::vector<Example>& data) {
    std::vector<double> losses(data.size());
    parallel_for(data.size(), [&](std::size_t i) { losses[i] = model.loss_and_gradients(data[i].X, data[i].S, nullptr); });
    double acc = 0.0;
    for (double l : losses) acc += l;
    return acc / static_cast<double>(data.size());
}

std::string format_log_row(const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g", r.epoch, r.train_loss, r.val_loss, r.learning_rate);
    return buf;
}

std::vector<EpochRecord> read_training_log(const fs::path& csv) {
    std::istringstream in(read_text_file(csv));
    std::string line;
    if (!std::getline(in, line) || line != kTrainLogHeader) throw FormatError("training log " + csv.string() + " has no header");
    std::vector<EpochRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRecord r;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.val_loss, &r.learning_rate) != 4) {
            throw FormatError("malformed training log row '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

TrainingResult train(FairModel& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                     const TrainingConfig& cfg, const fs::path& out_dir, bool resume) {
    cfg.validate();
    TrainingResult result;
    result.best_checkpoint = out_dir / "best";
    result.last_checkpoint = out_dir / "last";
    result.log_path = out_dir / "train_log.csv";

    PlateauScheduler scheduler(cfg.plateau_threshold, cfg.patience, cfg.min_learning_rate);
    nn::AdamState adam;
    std::vector<EpochRecord> history;
    std::size_t first_epoch = 1;

    if (resume) {
        nlohmann::json meta;
        model = FairModel::load(result.last_checkpoint, &adam, &meta);
        const auto& t = meta.at("training_state");
        scheduler.restore(t.at("scheduler"));
        first_epoch = t.at("epoch").get<std::size_t>() + 1;
        result.initial_val_loss = t.at("initial_val_loss").get<double>();
        result.best_val_loss = t.at("best_val_loss").get<double>();
        result.best_epoch = t.at("best_epoch").get<std::size_t>();
        history = read_training_log(result.log_path);
        if (history.size() + 1 != first_epoch) throw FormatError("training log does not match the last checkpoint");
    }
    require_data(model, train_set, "train");
    require_data(model, val_set, "val");
    fs::create_directories(out_dir);

    if (!resume) {
        adam = nn::make_adam(model.params(), cfg.learning_rate, cfg.weight_decay);
        result.initial_val_loss = mean_loss(model, val_set);
        if (!std::isfinite(result.initial_val_loss)) throw NumericalError("initial validation loss is not finite");
        scheduler.reset(result.initial_val_loss);
        result.best_val_loss = result.initial_val_loss;
        model.save(result.best_checkpoint, nullptr, {{"epoch", 0}, {"val_loss", result.initial_val_loss}});
        write_log(result.log_path, history);
    }

    const std::size_t n = train_set.size();
    for (std::size_t epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
        const auto order = epoch_order(n, cfg.seed, epoch);
        const double lr_used = adam.lr;
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            std::vector<nn::Gradients> per_sample(count);
            std::vector<double> losses(count);
            parallel_for(count, [&](std::size_t k) {
                const auto& ex = train_set[order[start + k]];
                losses[k] = model.loss_and_gradients(ex.X, ex.S, &per_sample[k]);
            });
            nn::Gradients grads = model.params().zeros_like();
            for (std::size_t k = 0; k < count; ++k) {
                if (!std::isfinite(losses[k])) {
                    throw NumericalError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
                }
                loss_sum += losses[k];
                nn::accumulate(grads, per_sample[k], 1.0 / static_cast<double>(count));
            }
            nn::adam_step(adam, model.params(), grads);
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(n), mean_loss(model, val_set), lr_used};
        if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
            throw NumericalError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
        }
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = epoch;
            model.save(result.best_checkpoint, nullptr, {{"epoch", epoch}, {"val_loss", rec.val_loss}});
        }
        scheduler.observe(rec.val_loss, adam.lr);
        history.push_back(rec);
        result.log.push_back(rec);
        write_log(result.log_path, history);

        const nlohmann::json state = {{"epoch", epoch},
                                      {"scheduler", scheduler.state()},
                                      {"initial_val_loss", result.initial_val_loss},
                                      {"best_val_loss", result.best_val_loss},
                                      {"best_epoch", result.best_epoch},
                                      {"training", to_json(cfg)}};
        model.save(result.last_checkpoint, &adam, {{"epoch", epoch}, {"training_state", state}});
    }
    return result;
}

}  // namespace esi::fair
