#pragma once

// End-to-end composition used by the command-line tool and the acceptance
// suite: split-aware preparation, training, forecasting and comparison.
//
// Only the training split [0, train_end_step) feeds the normalizer, the
// graph and the training samples.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "stg2seq/baselines.hpp"
#include "stg2seq/checkpoint.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/graph.hpp"
#include "stg2seq/io.hpp"
#include "stg2seq/metrics.hpp"
#include "stg2seq/model.hpp"
#include "stg2seq/training.hpp"

namespace stg2seq {

struct ExperimentConfig {
    Hyper model;  // regions, channels and time_features are taken from the data
    TrainConfig training;
    double epsilon = 0.1;
    std::uint64_t init_seed = 0;
    double mape_floor = 1.0;
    double olr_ridge = 1e-6;
};

inline nlohmann::json to_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_epsilon", t.adam_epsilon},
            {"batch_size", t.batch_size},
            {"max_epochs", t.max_epochs},
            {"seed", t.seed},
            {"teacher_forcing", t.teacher_forcing},
            {"shuffle", t.shuffle},
            {"checkpoint_every", t.checkpoint_every},
            {"clip_gradients", t.clip_gradients},
            {"clip_norm", t.clip_norm},
            {"early_stopping", t.early_stopping},
            {"validation_fraction", t.validation_fraction},
            {"patience", t.patience}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json model = to_json(c.model);
    model.erase("regions");
    model.erase("channels");
    model.erase("time_features");
    return {{"model", model},
            {"training", to_json(c.training)},
            {"graph", {{"epsilon", c.epsilon}}},
            {"init_seed", c.init_seed},
            {"mape_floor", c.mape_floor},
            {"olr_ridge", c.olr_ridge}};
}

/// Unknown keys are rejected so typos surface as errors.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& source = "config") {
    ExperimentConfig c;
    auto check_keys = [&](const nlohmann::json& obj, const nlohmann::json& reference, const std::string& where) {
        if (!obj.is_object()) throw InputError(source + ": " + where + " must be an object");
        for (const auto& [key, value] : obj.items()) {
            if (!reference.contains(key)) throw InputError(source + ": unknown key " + where + "." + key);
        }
    };
    try {
        const nlohmann::json defaults = to_json(c);
        check_keys(j, defaults, "<root>");
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, defaults.at("model"), "model");
            c.model.history = m.value("history", c.model.history);
            c.model.short_window = m.value("short_window", c.model.short_window);
            c.model.patch = m.value("patch", c.model.patch);
            c.model.horizon = m.value("horizon", c.model.horizon);
            c.model.hidden = m.value("hidden", c.model.hidden);
            c.model.long_layers = m.value("long_layers", c.model.long_layers);
            c.model.short_layers = m.value("short_layers", c.model.short_layers);
            c.model.gated = m.value("gated", c.model.gated);
            c.model.attention = m.value("attention", c.model.attention);
            c.model.short_encoder = m.value("short_encoder", c.model.short_encoder);
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            check_keys(t, defaults.at("training"), "training");
            auto& tc = c.training;
            tc.learning_rate = t.value("learning_rate", tc.learning_rate);
            tc.beta1 = t.value("beta1", tc.beta1);
            tc.beta2 = t.value("beta2", tc.beta2);
            tc.adam_epsilon = t.value("adam_epsilon", tc.adam_epsilon);
            tc.batch_size = t.value("batch_size", tc.batch_size);
            tc.max_epochs = t.value("max_epochs", tc.max_epochs);
            tc.seed = t.value("seed", tc.seed);
            tc.teacher_forcing = t.value("teacher_forcing", tc.teacher_forcing);
            tc.shuffle = t.value("shuffle", tc.shuffle);
            tc.checkpoint_every = t.value("checkpoint_every", tc.checkpoint_every);
            tc.clip_gradients = t.value("clip_gradients", tc.clip_gradients);
            tc.clip_norm = t.value("clip_norm", tc.clip_norm);
            tc.early_stopping = t.value("early_stopping", tc.early_stopping);
            tc.validation_fraction = t.value("validation_fraction", tc.validation_fraction);
            tc.patience = t.value("patience", tc.patience);
        }
        if (j.contains("graph")) {
            check_keys(j.at("graph"), defaults.at("graph"), "graph");
            c.epsilon = j.at("graph").value("epsilon", c.epsilon);
        }
        c.init_seed = j.value("init_seed", c.init_seed);
        c.mape_floor = j.value("mape_floor", c.mape_floor);
        c.olr_ridge = j.value("olr_ridge", c.olr_ridge);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(source + ": " + e.what());
    }
    c.training.validate();
    return c;
}

/// Dataset plus everything derived from its training split.
struct Prepared {
    Dataset data;
    Normalizer normalizer;
    RegionGraph graph;
    TimeFeatureSeries features;
    DemandSeries normalized;  // whole series, scaled with training-split bounds
};

inline Prepared prepare(Dataset data, double epsilon) {
    Prepared p;
    const DemandSeries train = data.train();
    p.normalizer = Normalizer::fit(train);
    p.graph = build_adjacency(train, epsilon);
    p.features = TimeFeatureSeries::encode(data.demand.steps(), data.config.calendar);
    p.normalized = p.normalizer.transform(data.demand);
    p.data = std::move(data);
    return p;
}

inline Hyper resolve_hyper(const ExperimentConfig& cfg, const Prepared& p) {
    Hyper h = cfg.model;
    h.regions = p.data.demand.regions();
    h.channels = p.data.demand.channels();
    h.time_features = p.features.width();
    return h.resolved();
}

inline SampleSplit prepared_samples(const Prepared& p, std::size_t history, std::size_t horizon) {
    return split_samples(make_samples(p.normalized, p.features, history, horizon), p.data.config.train_end_step);
}

inline Checkpoint make_checkpoint(const ModelParams& params, const Prepared& p, const ExperimentConfig& cfg) {
    Checkpoint ck;
    ck.params = params;
    ck.extra["adjacency"] = p.graph.adjacency;
    ck.extra["normalizer_min"] = Tensor(Shape{p.normalizer.channels()}, p.normalizer.min());
    ck.extra["normalizer_max"] = Tensor(Shape{p.normalizer.channels()}, p.normalizer.max());
    ck.meta["epsilon"] = cfg.epsilon;
    ck.meta["calendar"] = to_json(p.data.config);
    return ck;
}

/// Normalizer and propagation matrix stored alongside the parameters.
struct LoadedModel {
    ModelParams params;
    Normalizer normalizer;
    Tensor propagation;
};

inline LoadedModel unpack(const Checkpoint& ck) {
    for (const char* key : {"adjacency", "normalizer_min", "normalizer_max"}) {
        if (!ck.extra.count(key)) throw InputError(std::string("checkpoint: missing extra tensor ") + key);
    }
    LoadedModel m;
    m.params = ck.params;
    m.normalizer = Normalizer(ck.extra.at("normalizer_min").values(), ck.extra.at("normalizer_max").values());
    m.propagation = propagation_matrix(ck.extra.at("adjacency"));
    return m;
}

struct TrainOutcome {
    Checkpoint checkpoint;
    TrainResult result;
    nlohmann::json manifest;
};

inline TrainOutcome train_model(const Prepared& p, const ExperimentConfig& cfg, const TrainHooks& hooks = {}) {
    const Hyper h = resolve_hyper(cfg, p);
    const auto split = prepared_samples(p, h.history, h.horizon);
    if (split.train.empty()) throw InputError("training split holds no complete sample; lower h or tau, or move train_end_step");
    ModelParams params = init_params(h, cfg.init_seed);
    TrainOutcome out;
    out.result = train(params, split.train, p.graph.propagation, cfg.training, hooks);
    out.checkpoint = make_checkpoint(params, p, cfg);

    auto& m = out.manifest;
    m["config"] = to_json(cfg);
    m["hyper"] = to_json(h);
    m["graph"] = {{"epsilon", cfg.epsilon}, {"edge_count", p.graph.edge_count()}, {"n_regions", p.graph.n_regions}};
    m["layer_widths"] = {{"long", std::vector<std::size_t>(h.long_layers, h.hidden)},
                         {"short", std::vector<std::size_t>(h.short_layers, h.hidden)}};
    m["parameter_count"] = parameter_count(params);
    m["seeds"] = {{"init", cfg.init_seed}, {"shuffle", cfg.training.seed}};
    m["data"] = {{"demand_fnv1a", p.data.demand_hash},
                 {"train_end_step", p.data.config.train_end_step},
                 {"train_samples", split.train.size()}};
    m["history"] = nlohmann::json::array();
    for (const auto& rec : out.result.history) {
        nlohmann::json e{{"epoch", rec.epoch}, {"train_loss", rec.train_loss}};
        if (rec.validation_loss) e["validation_loss"] = *rec.validation_loss;
        m["history"].push_back(e);
    }
    m["steps"] = out.result.steps;
    m["best_epoch"] = out.result.best_epoch;
    m["stopped_early"] = out.result.stopped_early;
    return out;
}

/// De-normalized (tau, N, d) forecast after `anchor` from the stored series.
inline Tensor forecast_at(const LoadedModel& model, const DemandSeries& demand, const Calendar& calendar,
                          std::size_t anchor, std::size_t tau, FeedMode mode) {
    const Hyper& h = model.params.hyper;
    if (anchor + 1 < h.history) {
        throw InputError("anchor " + std::to_string(anchor) + " leaves fewer than h=" + std::to_string(h.history) +
                         " input frames");
    }
    if (anchor >= demand.steps()) throw InputError("anchor lies beyond the series");
    if (demand.regions() != h.regions || demand.channels() != h.channels) {
        throw InputError("data has " + std::to_string(demand.regions()) + " regions x " + std::to_string(demand.channels()) +
                         " channels, the checkpoint expects " + std::to_string(h.regions) + " x " +
                         std::to_string(h.channels));
    }
    if (!h.short_encoder && tau != 1) throw ConfigError("this model has no short-term encoder and predicts tau=1 only");
    const Tensor input = model.normalizer.transform(demand.frames(anchor + 1 - h.history, anchor + 1));
    Tensor feats(Shape{tau, calendar.feature_width()});
    for (std::size_t s = 0; s < tau; ++s) {
        const auto row = encode_time(anchor + 1 + s, calendar);
        std::copy(row.begin(), row.end(), feats.data().begin() + static_cast<std::ptrdiff_t>(s * row.size()));
    }
    std::optional<Tensor> truth;
    if (mode == FeedMode::teacher_forced) {
        if (anchor + tau >= demand.steps()) throw InputError("teacher forcing needs ground truth for every forecast step");
        truth = model.normalizer.transform(demand.frames(anchor + 1, anchor + 1 + tau));
    }
    return model.normalizer.inverse_transform(predict(model.params, model.propagation, input, feats, mode, truth));
}

struct MethodReport {
    std::string method;
    MetricReport report;
};

struct Comparison {
    std::vector<MethodReport> methods;  // STG2Seq, HA, OLR
    std::size_t test_samples = 0;
    std::map<std::string, std::size_t> ha_fallbacks;  // slot level -> predicted steps
};

/// Free-running evaluation of the model and both baselines on the test split.
inline Comparison compare_methods(const Prepared& p, const LoadedModel& model, const ExperimentConfig& cfg) {
    const Hyper& h = model.params.hyper;
    const auto split = prepared_samples(p, h.history, h.horizon);
    if (split.test.empty()) throw InputError("test split holds no complete sample");
    const std::size_t s_count = split.test.size(), frame = h.regions * h.channels, block = h.horizon * frame;
    const Shape stacked{s_count, h.horizon, h.regions, h.channels};
    Tensor truth(stacked), ours(stacked), ha_pred(stacked), olr_pred(stacked);

    const auto ha = HistoricalAverage::fit(p.data.train(), p.data.config.calendar);
    const auto olr = fit_olr(split.train, cfg.olr_ridge);
    Comparison cmp;
    cmp.test_samples = s_count;
    auto put = [&](Tensor& dst, std::size_t i, const Tensor& src) {
        std::copy(src.data().begin(), src.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(i * block));
    };
    for (std::size_t i = 0; i < s_count; ++i) {
        const Sample& s = split.test[i];
        put(truth, i, p.normalizer.inverse_transform(s.targets));
        put(ours, i, p.normalizer.inverse_transform(
                         predict(model.params, model.propagation, s.input, s.target_features, FeedMode::free_running)));
        std::vector<SlotLevel> levels;
        put(ha_pred, i, ha.forecast(s.anchor, h.horizon, &levels));
        for (auto l : levels) ++cmp.ha_fallbacks[to_string(l)];
        put(olr_pred, i, p.normalizer.inverse_transform(predict_olr(olr, s.input)));
    }
    cmp.methods.push_back({"STG2Seq", evaluate(ours, truth, cfg.mape_floor)});
    cmp.methods.push_back({"HA", evaluate(ha_pred, truth, cfg.mape_floor)});
    cmp.methods.push_back({"OLR", evaluate(olr_pred, truth, cfg.mape_floor)});
    return cmp;
}

inline nlohmann::json to_json(const Comparison& c) {
    nlohmann::json j;
    j["test_samples"] = c.test_samples;
    j["ha_fallbacks"] = c.ha_fallbacks;
    for (const auto& m : c.methods) j["methods"][m.method] = to_json(m.report);
    return j;
}

/// method,horizon_step,rmse,mae,mape: one row per method and step.
inline std::string plot_csv(const Comparison& c) {
    std::string out = "method,horizon_step,rmse,mae,mape\n";
    for (const auto& m : c.methods) {
        for (const auto& s : m.report.per_step) {
            out += m.method + ',' + std::to_string(s.step) + ',' + format_double(s.rmse) + ',' + format_double(s.mae) +
                   ',' + (s.mape ? format_double(*s.mape) : std::string()) + '\n';
        }
    }
    return out;
}

/// Human-readable per-step table.
inline std::string metric_table(const Comparison& c) {
    std::string out = "method   step      rmse       mae      mape\n";
    char buf[128];
    for (const auto& m : c.methods) {
        auto line = [&](const std::string& step, const StepMetrics& s) {
            std::snprintf(buf, sizeof buf, "%-8s %4s %9.4f %9.4f %9s\n", m.method.c_str(), step.c_str(), s.rmse, s.mae,
                          s.mape ? std::to_string(*s.mape).substr(0, 8).c_str() : "-");
            out += buf;
        };
        for (const auto& s : m.report.per_step) line(std::to_string(s.step), s);
        line("all", m.report.aggregate);
    }
    return out;
}

}  // namespace stg2seq
