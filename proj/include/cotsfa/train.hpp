#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "cotsfa/augment.hpp"
#include "cotsfa/dataset.hpp"
#include "cotsfa/errors.hpp"
#include "cotsfa/model.hpp"

namespace cotsfa::train {

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t epochs = 10;
    double lr = 1e-3;
    bool lr_halving = true;
    bool early_stopping = true;
    std::size_t patience = 3;
    double lambda_align = 0.1;
    std::size_t views = 5;
    std::vector<augment::Mode> modes{augment::Mode::input_only, augment::Mode::input_output};
    double temperature = 1.0;
    bool forecast_on_augmented = false;
    std::size_t log_every = 10;
    augment::AugmentOptions augment;
    std::uint64_t seed = 0;

    void validate() const;
    bool uses_augmentation() const { return lambda_align > 0.0 || forecast_on_augmented; }
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    static AdamState for_params(const model::ModelParams& params);
};

/// Bias-corrected Adam update of every parameter tensor, in place.
/// Throws TrainingAborted on a non-finite gradient.
void adam_step(model::ModelParams& params, std::span<const Tensor> grads, AdamState& state, double lr);

/// lr0 * 0.5^epoch (or lr0 when halving is off).
double lr_schedule(double lr0, std::size_t epoch, bool halving = true);

struct StopDecision {
    bool stop = false;
    std::size_t best_index = 0;
};

/// best = first argmin; stop once `patience` epochs have passed without a
/// strictly lower value than history[best].
StopDecision early_stopper(std::span<const double> history, std::size_t patience);

struct LogRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double forecast = 0.0;
    double align = 0.0;
    double total = 0.0;
    std::optional<double> val;
    double lr = 0.0;
};

/// Records are means over the batches since the previous record; one is
/// emitted every `log_every` optimizer steps and at the end of every epoch.
struct TrainLog {
    std::vector<LogRecord> records;

    void write_csv(std::ostream& out) const;
};

class TrainingDiverged : public TrainingAborted {
public:
    TrainingDiverged(const std::string& what, std::size_t step, TrainLog log)
        : TrainingAborted(what, step), log_(std::move(log)) {}

    const TrainLog& log() const noexcept { return log_; }

private:
    TrainLog log_;
};

struct TrainHooks {
    /// Replaces the validation MSE computed on the val windows.
    std::function<double(std::size_t epoch, const model::ModelParams&)> validate;
    std::function<void(std::size_t epoch, const model::ModelParams&)> on_epoch_end;
};

struct TrainResult {
    model::ModelParams params;
    TrainLog log;
    std::size_t optimizer_steps = 0;
    std::size_t epochs_run = 0;
    std::optional<std::size_t> best_epoch;
    std::vector<double> val_history;
    bool stopped_early = false;
};

struct StepLosses {
    double forecast = 0.0;
    double align = 0.0;
    double total = 0.0;
};

/// Objective of one mini-batch for tape-tracked `params`: forecast MSE on the
/// originals plus lambda times the alignment loss averaged over modes.
/// Draws the augmented views from `aug_rng`.
Tensor batch_objective(const model::ModelParams& params, std::span<const data::WindowPair> batch,
                       const TrainConfig& config, Rng& aug_rng, StepLosses* losses = nullptr);

/// Forecast MSE over all windows, no tape.
double evaluate_mse(const model::ModelParams& params, std::span<const data::WindowPair> windows);

/// Shuffled mini-batch Adam training with per-epoch validation, learning-rate
/// halving and early stopping; returns the best-validation parameters.
TrainResult train_model(std::span<const data::WindowPair> train, std::span<const data::WindowPair> val,
                        const model::ModelConfig& model_config, const TrainConfig& config,
                        const TrainHooks& hooks = {});

}  // namespace cotsfa::train
