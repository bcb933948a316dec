#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "esi/fair/model.hpp"
#include "esi/nmm.hpp"

namespace esi::fair {

struct TrainingConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    double min_learning_rate = 1e-6;
    // Epochs without a relative val-loss improvement above plateau_threshold before halving.
    std::size_t patience = 3;
    double plateau_threshold = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});

// Halves the learning rate after `patience` consecutive epochs without improvement.
class PlateauScheduler {
public:
    PlateauScheduler(double threshold = 1e-4, std::size_t patience = 3, double min_lr = 1e-6);

    // The reference loss before any epoch (the untrained model's val loss).
    void reset(double initial_loss);
    // Returns true when lr was halved.
    bool observe(double val_loss, double& lr);

    double best() const noexcept { return best_; }
    std::size_t stale_epochs() const noexcept { return stale_; }

    nlohmann::json state() const;
    void restore(const nlohmann::json& state);

private:
    double threshold_;
    std::size_t patience_;
    double min_lr_;
    double best_;
    std::size_t stale_ = 0;
};

struct Example {
    Tensor X;
    Tensor S;
};

std::vector<Example> load_split(const Manifest& manifest, Split split);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainingResult {
    std::vector<EpochRecord> log;  // epochs run by this call
    double initial_val_loss = 0.0;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;    // 0 = untrained weights were never beaten
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
    std::filesystem::path log_path;
};

// Mean per-sample loss; samples run in parallel, summed in index order.
double mean_loss(const FairModel& model, const std::vector<Example>& data);

// Writes <out>/best, <out>/last and <out>/train_log.csv. With resume=true, continues from
// <out>/last up to cfg.epochs total, appending to the log.
TrainingResult train(FairModel& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                     const TrainingConfig& cfg, const std::filesystem::path& out_dir, bool resume = false);

std::string format_log_row(const EpochRecord& r);
inline constexpr const char* kTrainLogHeader = "epoch,train_loss,val_loss,lr";
std::vector<EpochRecord> read_training_log(const std::filesystem::path& csv);

}  // namespace esi::fair
