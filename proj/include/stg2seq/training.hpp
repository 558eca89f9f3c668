#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stg2seq/autodiff.hpp"
#include "stg2seq/errors.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/model.hpp"

namespace stg2seq {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::uint64_t seed = 0;
    bool teacher_forcing = true;
    bool shuffle = true;
    std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
    bool clip_gradients = false;
    double clip_norm = 5.0;
    bool early_stopping = false;
    double validation_fraction = 0.1;  // chronological tail of the training samples
    std::size_t patience = 20;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("beta1 and beta2 must lie in [0, 1)");
        }
        if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (clip_gradients && !(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
        if (early_stopping && !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
            throw ConfigError("validation_fraction must lie in (0, 1)");
        }
    }
};

/// Sum over forecast steps of the squared Frobenius norm of the error frame.
inline Var sequence_loss(const Var& pred, const Var& truth) {
    if (pred.shape() != truth.shape()) {
        throw DimensionError("loss: prediction " + to_string(pred.shape()) + " vs truth " + to_string(truth.shape()));
    }
    const Var diff = sub(pred, truth);
    return sum(mul(diff, diff));
}

inline double sequence_loss(const Tensor& pred, const Tensor& truth) {
    Tape tape;
    return sequence_loss(tape.constant(pred), tape.constant(truth)).value().item();
}

using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

inline ParamRefs parameter_refs(ModelParams& params) {
    ParamRefs refs;
    for_each_tensor(params, [&](const std::string& name, Tensor& t) { refs.emplace_back(name, &t); });
    return refs;
}

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Moments are created on the first call.
inline void adam_step(const ParamRefs& params, const std::vector<Tensor>& grads, AdamState& state,
                      const TrainConfig& cfg) {
    if (grads.size() != params.size()) throw DimensionError("adam: gradient count does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].second->shape()) {
            throw DimensionError("adam: gradient shape mismatch for " + params[i].first);
        }
        if (!grads[i].all_finite()) throw NumericalError("adam: non-finite gradient for " + params[i].first);
    }
    if (state.m.empty()) {
        for (const auto& [name, t] : params) {
            state.m.emplace_back(t->shape(), 0.0);
            state.v.emplace_back(t->shape(), 0.0);
        }
    }
    ++state.step;
    const double step = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& theta = *params[i].second;
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
        }
    }
}

struct SampleGradient {
    double loss = 0.0;
    std::vector<Tensor> grads;  // parameter order of for_each_tensor
};

/// Loss of one sample and its gradient with respect to every parameter.
inline SampleGradient sample_gradient(const ModelParams& params, const Tensor& prop, const Sample& sample,
                                      FeedMode mode) {
    Tape tape;
    const auto bound = bind(tape, params, true);
    const Var truth = tape.constant(sample.targets);
    const Var pred = forecast(bound, tape.constant(prop), tape.constant(sample.input),
                              tape.constant(sample.target_features), mode, truth);
    const Var loss = sequence_loss(pred, truth);
    tape.backward(loss);
    SampleGradient out;
    out.loss = loss.value().item();
    for_each_tensor(bound, [&](const std::string&, const Var& v) { out.grads.push_back(tape.gradient(v)); });
    return out;
}

/// Mean per-sample loss without gradients.
inline double mean_loss(const ModelParams& params, const Tensor& prop, const std::vector<Sample>& samples,
                        FeedMode mode) {
    if (samples.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : samples) {
        const std::optional<Tensor> truth =
            mode == FeedMode::teacher_forced ? std::optional<Tensor>(s.targets) : std::nullopt;
        total += sequence_loss(predict(params, prop, s.input, s.target_features, mode, truth), s.targets);
    }
    return total / static_cast<double>(samples.size());
}

inline double global_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) s += v * v;
    return std::sqrt(s);
}

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> validation_loss;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

struct TrainHooks {
    /// Called every cfg.checkpoint_every epochs with the current parameters.
    std::function<void(const ModelParams&, const TrainResult&)> checkpoint;
    /// Called with the last parameters that completed an epoch when training diverges.
    std::function<void(const ModelParams&, const TrainResult&)> diverged;
    /// Called after each epoch, e.g. for progress logging.
    std::function<void(const EpochRecord&)> epoch_end;
};

/// Mini-batch Adam on the mean per-sample loss.
///
/// Gradients of a batch are summed in sample order, so results depend only
/// on (params, samples, prop, cfg). With early stopping the chronological
/// tail of `samples` is held out and the best-validation parameters are
/// restored at the end.
inline TrainResult train(ModelParams& params, const std::vector<Sample>& samples, const Tensor& prop,
                         const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (samples.empty()) throw InputError("train: no training samples");
    const FeedMode mode = cfg.teacher_forcing ? FeedMode::teacher_forced : FeedMode::free_running;

    std::vector<Sample> fit_set = samples;
    std::vector<Sample> validation;
    if (cfg.early_stopping) {
        const auto held = static_cast<std::size_t>(std::ceil(cfg.validation_fraction * static_cast<double>(samples.size())));
        if (held == 0 || held >= samples.size()) throw InputError("train: too few samples for a validation split");
        validation.assign(samples.end() - static_cast<std::ptrdiff_t>(held), samples.end());
        fit_set.resize(samples.size() - held);
    }

    ParamRefs refs = parameter_refs(params);
    AdamState adam;
    TrainResult result;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(fit_set.size());
    std::iota(order.begin(), order.end(), 0);

    ModelParams last_good = params;
    std::optional<ModelParams> best;
    double best_val = 0.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), start + cfg.batch_size);
                const double inv = 1.0 / static_cast<double>(end - start);
                std::vector<Tensor> grads;
                double batch_loss = 0.0;
                for (std::size_t i = start; i < end; ++i) {
                    SampleGradient sg = sample_gradient(params, prop, fit_set[order[i]], mode);
                    if (!std::isfinite(sg.loss)) throw NumericalError("train: non-finite loss");
                    batch_loss += sg.loss;
                    if (grads.empty()) {
                        grads = std::move(sg.grads);
                    } else {
                        for (std::size_t p = 0; p < grads.size(); ++p)
                            for (std::size_t j = 0; j < grads[p].size(); ++j) grads[p][j] += sg.grads[p][j];
                    }
                }
                for (auto& g : grads)
                    for (double& v : g.data()) v *= inv;
                if (cfg.clip_gradients) {
                    const double norm = global_norm(grads);
                    if (norm > cfg.clip_norm) {
                        for (auto& g : grads)
                            for (double& v : g.data()) v *= cfg.clip_norm / norm;
                    }
                }
                adam_step(refs, grads, adam, cfg);
                ++result.steps;
                epoch_total += batch_loss;
            }
            if (!std::isfinite(epoch_total)) throw NumericalError("train: non-finite epoch loss");
        } catch (const NumericalError&) {
            if (hooks.diverged) hooks.diverged(last_good, result);
            throw;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_total / static_cast<double>(fit_set.size());
        if (cfg.early_stopping) {
            const double val = mean_loss(params, prop, validation, FeedMode::free_running);
            record.validation_loss = val;
            if (!best || val < best_val) {
                best = params;
                best_val = val;
                result.best_epoch = epoch;
                since_best = 0;
            } else {
                ++since_best;
            }
        } else {
            result.best_epoch = epoch;
        }
        result.history.push_back(record);
        last_good = params;
        if (hooks.epoch_end) hooks.epoch_end(record);
        if (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0 && hooks.checkpoint) hooks.checkpoint(params, result);
        if (cfg.early_stopping && since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    if (best) params = std::move(*best);
    return result;
}

}  // namespace stg2seq
