#pragma once

#include "adstage/architectures.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace adstage {

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::size_t plateau_patience = 3;
    double plateau_factor = 0.1;
    double min_learning_rate = 1e-10;
    std::uint64_t shuffle_seed = 42;

    /// Throws ConfigError for non-positive rates, zero patience/epochs/batch
    /// or a factor outside (0,1).
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

// ---- Adam ---------------------------------------------------------------------------

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update of every parameter that has a gradient:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Throws TrainingError naming the parameter when a gradient is not finite;
/// nothing is modified in that case.
void adam_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& config);

// ---- plateau learning-rate schedule --------------------------------------------------

/// Multiplies the rate by `factor` once `patience` consecutive observations
/// fail to beat the best loss seen (strictly lower, no min-delta). The wait
/// counter resets after an improvement or a reduction; the rate never drops
/// below `min_lr`.
class PlateauScheduler {
public:
    PlateauScheduler() = default;
    PlateauScheduler(double lr, std::size_t patience, double factor, double min_lr = 1e-10);

    /// Records one epoch's monitored loss and returns the rate for the next epoch.
    double observe(double loss);

    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    std::size_t wait() const noexcept { return wait_; }
    std::size_t reductions() const noexcept { return reductions_; }
    bool has_best() const noexcept { return has_best_; }

    nlohmann::json to_json() const;
    static PlateauScheduler from_json(const nlohmann::json& j);

private:
    double lr_ = 1e-4;
    std::size_t patience_ = 3;
    double factor_ = 0.1;
    double min_lr_ = 1e-10;
    double best_ = 0.0;
    bool has_best_ = false;
    std::size_t wait_ = 0;
    std::size_t reductions_ = 0;
};

/// Replays a loss sequence through a fresh scheduler and returns the final rate.
double plateau_lr(const std::vector<double>& losses, double initial_lr, std::size_t patience = 3,
                  double factor = 0.1);

// ---- training loop --------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;
    std::size_t steps = 0;
};

using History = std::vector<EpochRecord>;

std::string history_csv(const History& history);
nlohmann::json to_json(const EpochRecord& record);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

/// Everything needed to resume training exactly where it stopped.
struct TrainingState {
    std::size_t epochs_done = 0;
    AdamState adam;
    PlateauScheduler scheduler;
    History history;

    static TrainingState fresh(const TrainConfig& config);
};

struct Batch {
    const Tensor& X;
    const Tensor& Y;
};

using EpochCallback = std::function<void(const EpochRecord&, const ModelGraph&, const TrainingState&)>;

/// Mini-batch training until state.epochs_done == config.epochs. Each epoch
/// shuffles with a permutation derived from (shuffle_seed, epoch), trains on
/// every batch including the final partial one, then scores the validation
/// set in infer mode and feeds its loss to the plateau schedule (train loss
/// when no validation rows are given). A trailing batch of one sample is
/// folded into the previous batch when the model has batch normalisation.
/// Throws TrainingError with epoch/batch indices on a non-finite loss.
History fit(ModelGraph& graph, Batch train, Batch val, const TrainConfig& config, TrainingState& state,
            const EpochCallback& on_epoch = {});

History fit(ModelGraph& graph, Batch train, Batch val, const TrainConfig& config);

struct LossAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Infer-mode mean cross-entropy and accuracy.
LossAccuracy evaluate_loss(const ModelGraph& graph, const Tensor& X, const Tensor& Y, std::size_t batch = 32);

/// Gradient of the mean cross-entropy for one batch (train mode), with the
/// updated batch-norm statistics it produced.
struct BatchGradients {
    double loss = 0.0;
    std::size_t correct = 0;
    std::map<std::string, Tensor> grads;
    std::map<std::string, BatchNormState> bn_states;
};
BatchGradients compute_gradients(const ModelGraph& graph, const Tensor& X, const Tensor& Y);

} // namespace adstage
