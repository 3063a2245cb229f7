#include "cotsfa/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "cotsfa/loss.hpp"
#include "cotsfa/ops.hpp"

namespace cotsfa::train {
namespace {

using data::WindowPair;

// [N, rows, C] from the chosen matrices.
Tensor sample_major(std::span<const Matrix> ms) { return model::stack_inputs(ms); }

// [rows, N, C]: step-major layout used by the similarity terms.
Tensor step_major(std::span<const Matrix> ms) {
    const std::size_t n = ms.size(), rows = ms.front().rows, cols = ms.front().cols;
    std::vector<double> v(n * rows * cols);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) v[(r * n + i) * cols + c] = ms[i](r, c);
        }
    }
    return Tensor({rows, n, cols}, std::move(v));
}

struct Accumulator {
    std::size_t batches = 0;
    double forecast = 0.0;
    double align = 0.0;
    double total = 0.0;

    void add(const StepLosses& s) {
        ++batches;
        forecast += s.forecast;
        align += s.align;
        total += s.total;
    }
};

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (lambda_align > 0.0 && batch_size < 2) {
        throw ValidationError("batch_size must be >= 2 when lambda_align > 0");
    }
    if (!(lambda_align >= 0.0)) throw ValidationError("lambda_align must be >= 0");
    if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (uses_augmentation()) {
        if (views < 1) throw ValidationError("views must be >= 1");
        if (modes.empty()) throw ValidationError("at least one augmentation mode is required");
        for (auto m : modes) {
            if (m == augment::Mode::pointwise) {
                throw ValidationError("training augmentation modes are input_only and input_output");
            }
        }
    }
    if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
    if (log_every < 1) throw ValidationError("log_every must be >= 1");
    if (!(augment.jitter >= 0.0)) throw ValidationError("jitter must be >= 0");
}

AdamState AdamState::for_params(const model::ModelParams& params) {
    AdamState s;
    for (const auto& t : params.tensors) {
        s.first_moment.emplace_back(t.value.size(), 0.0);
        s.second_moment.emplace_back(t.value.size(), 0.0);
    }
    return s;
}

void adam_step(model::ModelParams& params, std::span<const Tensor> grads, AdamState& state, double lr) {
    if (grads.size() != params.tensors.size() || state.first_moment.size() != params.tensors.size()) {
        throw DimensionError("adam_step: parameter, gradient and state counts differ");
    }
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (grads[k].shape() != params.tensors[k].value.shape()) {
            throw DimensionError("adam_step: gradient shape mismatch for " + params.tensors[k].name);
        }
        for (double g : grads[k].data()) {
            if (!std::isfinite(g)) {
                throw TrainingAborted("non-finite gradient for " + params.tensors[k].name, state.step + 1);
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < grads.size(); ++k) {
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        auto g = grads[k].data();
        std::vector<double> theta = params.tensors[k].value.to_vector();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
        params.tensors[k].value = Tensor(params.tensors[k].value.shape(), std::move(theta));
    }
}

double lr_schedule(double lr0, std::size_t epoch, bool halving) {
    if (!halving) return lr0;
    return std::ldexp(lr0, -static_cast<int>(std::min<std::size_t>(epoch, 2000)));
}

StopDecision early_stopper(std::span<const double> history, std::size_t patience) {
    StopDecision d;
    if (history.empty()) return d;
    d.best_index = static_cast<std::size_t>(std::min_element(history.begin(), history.end()) - history.begin());
    d.stop = history.size() - 1 - d.best_index >= patience;
    return d;
}

void TrainLog::write_csv(std::ostream& out) const {
    out << "step,forecast,align,total,val,lr\n";
    for (const auto& r : records) {
        out << r.step << ',' << data::format_double(r.forecast) << ',' << data::format_double(r.align) << ','
            << data::format_double(r.total) << ',' << (r.val ? data::format_double(*r.val) : std::string())
            << ',' << data::format_double(r.lr) << '\n';
    }
}

Tensor batch_objective(const model::ModelParams& params, std::span<const WindowPair> batch,
                       const TrainConfig& config, Rng& aug_rng, StepLosses* losses) {
    const std::size_t B = batch.size();
    if (B == 0) throw ContractError("batch_objective: empty batch");
    std::vector<Matrix> xs, ys;
    for (const auto& w : batch) {
        xs.push_back(w.x);
        ys.push_back(w.y);
    }

    std::vector<std::vector<augment::AugmentedPair>> views_by_mode;
    if (config.uses_augmentation()) {
        for (auto mode : config.modes) {
            views_by_mode.push_back(augment::augment_batch(batch, mode, config.views, config.augment, aug_rng));
            for (const auto& aug : views_by_mode.back()) xs.push_back(aug.x);
        }
    }

    const Tensor z = model::encode(params, sample_major(xs));
    Tensor forecast_term;
    if (config.forecast_on_augmented && !views_by_mode.empty()) {
        std::vector<Matrix> all_targets = ys;
        for (const auto& views : views_by_mode) {
            for (const auto& aug : views) all_targets.push_back(aug.y);
        }
        forecast_term = loss::forecast_loss(model::forecast(params, z), sample_major(all_targets));
    } else {
        const Tensor z_orig = views_by_mode.empty() ? z : ops::slice(z, 1, 0, B);
        forecast_term = loss::forecast_loss(model::forecast(params, z_orig), sample_major(ys));
    }

    StepLosses s;
    s.forecast = forecast_term.item();
    Tensor objective = forecast_term;
    if (config.lambda_align > 0.0) {
        const Tensor z_orig = ops::slice(z, 1, 0, B);
        const Tensor targets_orig = step_major(ys);
        const std::size_t span = config.views * B;
        Tensor align_sum;
        for (std::size_t m = 0; m < views_by_mode.size(); ++m) {
            std::vector<Matrix> aug_targets;
            for (const auto& aug : views_by_mode[m]) aug_targets.push_back(aug.y);
            loss::SimilarityBatch sb{z_orig,
                                     ops::slice(z, 1, B + m * span, B + (m + 1) * span),
                                     targets_orig,
                                     step_major(aug_targets),
                                     config.views,
                                     config.temperature};
            const Tensor term = loss::alignment_loss(sb);
            align_sum = m == 0 ? term : ops::add(align_sum, term);
        }
        const Tensor align = ops::scale(align_sum, 1.0 / static_cast<double>(views_by_mode.size()));
        s.align = align.item();
        objective = loss::total_loss(forecast_term, align, config.lambda_align);
    }
    s.total = objective.item();
    if (losses) *losses = s;
    return objective;
}

double evaluate_mse(const model::ModelParams& params, std::span<const WindowPair> windows) {
    if (windows.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<Matrix> xs;
    for (const auto& w : windows) xs.push_back(w.x);
    const auto preds = model::predict(params, xs);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        for (std::size_t k = 0; k < preds[i].values.size(); ++k) {
            const double d = preds[i].values[k] - windows[i].y.values[k];
            sum += d * d;
        }
        n += preds[i].values.size();
    }
    return sum / static_cast<double>(n);
}

TrainResult train_model(std::span<const WindowPair> train, std::span<const WindowPair> val,
                        const model::ModelConfig& model_config, const TrainConfig& config,
                        const TrainHooks& hooks) {
    config.validate();
    model_config.validate();
    if (train.empty()) throw ContractError("train_model: no training windows");
    const bool has_validation = static_cast<bool>(hooks.validate) || !val.empty();
    if (config.early_stopping && !has_validation) {
        throw ContractError("train_model: early stopping needs validation windows");
    }

    TrainResult result;
    model::ModelParams params = model::init_model(model_config);
    AdamState state = AdamState::for_params(params);
    Rng shuffle_rng = make_rng(config.seed, 1);
    Rng aug_rng = make_rng(config.seed, 2);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::optional<model::ModelParams> best;
    double best_val = std::numeric_limits<double>::infinity();
    Accumulator pending;
    std::size_t step = 0;

    auto flush = [&](std::size_t epoch, double lr, std::optional<double> val_loss) {
        if (pending.batches == 0) {
            if (val_loss && !result.log.records.empty() && result.log.records.back().step == step) {
                result.log.records.back().val = val_loss;
            }
            return;
        }
        const double n = static_cast<double>(pending.batches);
        result.log.records.push_back(
            {step, epoch, pending.forecast / n, pending.align / n, pending.total / n, val_loss, lr});
        pending = {};
    };

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_schedule(config.lr, epoch, config.lr_halving);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            std::vector<WindowPair> batch;
            batch.reserve(n);
            for (std::size_t k = 0; k < n; ++k) batch.push_back(train[order[start + k]]);

            Tape tape;
            const auto tracked = model::track(params, tape);
            StepLosses losses;
            const Tensor objective = batch_objective(tracked, batch, config, aug_rng, &losses);
            if (!std::isfinite(losses.total)) {
                flush(epoch, lr, std::nullopt);
                throw TrainingDiverged("training diverged: non-finite loss", step + 1, result.log);
            }
            tape.backward(objective);
            std::vector<Tensor> grads;
            for (const auto& t : tracked.tensors) grads.push_back(tape.grad(t.value));
            try {
                adam_step(params, grads, state, lr);
            } catch (const TrainingAborted& e) {
                flush(epoch, lr, std::nullopt);
                throw TrainingDiverged(e.what(), step + 1, result.log);
            }
            ++step;
            pending.add(losses);
            if (step % config.log_every == 0) flush(epoch, lr, std::nullopt);
        }

        std::optional<double> val_loss;
        if (has_validation) {
            val_loss = hooks.validate ? hooks.validate(epoch, params) : evaluate_mse(params, val);
            result.val_history.push_back(*val_loss);
        }
        flush(epoch, lr, val_loss);
        ++result.epochs_run;
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, params);

        if (val_loss && *val_loss < best_val) {
            best_val = *val_loss;
            best = params;
            result.best_epoch = epoch;
        }
        if (config.early_stopping && early_stopper(result.val_history, config.patience).stop) {
            result.stopped_early = true;
            break;
        }
    }
    result.optimizer_steps = step;
    result.params = best ? *best : params;
    return result;
}

}  // namespace cotsfa::train
