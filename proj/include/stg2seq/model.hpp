#pragma once

// Graph-convolutional sequence-to-sequence forecaster.
//
// A long-term encoder reads the h most recent frames once per forecast. For
// each future step a short-term encoder reads the q most recent frames,
// which include earlier predictions (free running) or ground truth (teacher
// forcing). Both encodings are joined along time and reduced to one frame
// by temporal attention followed by per-target-channel attention, each
// conditioned on the target step's calendar features.
//
// Every encoder layer is a gated graph convolution over a causal window of
// k frames: the time axis is zero-padded at the front, so output frame i
// depends on input frames <= i only.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stg2seq/autodiff.hpp"
#include "stg2seq/errors.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

/// Smallest stack of width-k causal windows whose receptive field covers `length` frames.
inline std::size_t layers_for_receptive_field(std::size_t length, std::size_t patch) {
    if (patch < 2) throw ConfigError("patch size k must be >= 2");
    if (length <= 1) return 1;
    return (length - 1 + patch - 2) / (patch - 1);
}

struct Hyper {
    std::size_t regions = 0;        // N
    std::size_t channels = 1;       // d_in; also the number of predicted channels
    std::size_t time_features = 0;  // d_e
    std::size_t history = 12;       // h
    std::size_t short_window = 3;   // q
    std::size_t patch = 3;          // k
    std::size_t horizon = 3;        // tau
    std::size_t hidden = 32;        // d_out, width of every encoder layer
    std::size_t long_layers = 0;    // 0 selects the receptive-field minimum
    std::size_t short_layers = 0;
    bool gated = true;          // false: relu(linear + residual) instead of the sigmoid gate
    bool attention = true;      // false: uniform (mean) pooling over time and channels
    bool short_encoder = true;  // false: single-step model fed by the long-term encoder only

    /// Length of the joint representation fed to the output module.
    std::size_t joint_length() const { return history + (short_encoder ? short_window : 0); }

    /// Validated copy with layer counts filled in. Without a short-term
    /// encoder the horizon is forced to 1.
    Hyper resolved() const {
        Hyper r = *this;
        if (regions < 1) throw ConfigError("regions must be >= 1");
        if (channels < 1) throw ConfigError("channels must be >= 1");
        if (time_features < 1) throw ConfigError("time_features must be >= 1");
        if (hidden < 1) throw ConfigError("hidden width must be >= 1");
        if (horizon < 1) throw ConfigError("horizon tau must be >= 1");
        if (!(history > short_window && short_window >= patch && patch >= 2)) {
            throw ConfigError("need h > q >= k >= 2, got h=" + std::to_string(history) +
                              " q=" + std::to_string(short_window) + " k=" + std::to_string(patch));
        }
        const std::size_t long_min = layers_for_receptive_field(history, patch);
        const std::size_t short_min = layers_for_receptive_field(short_window, patch);
        if (r.long_layers == 0) r.long_layers = long_min;
        if (r.short_layers == 0) r.short_layers = short_min;
        if (r.long_layers < long_min || r.short_layers < short_min) {
            throw ConfigError("encoder layer counts must cover the input window: need long >= " +
                              std::to_string(long_min) + ", short >= " + std::to_string(short_min));
        }
        if (!short_encoder) {
            r.horizon = 1;
            r.short_layers = 0;
        }
        return r;
    }
};

// ---------------------------------------------------------------------------
// Parameters, generic over Tensor (storage) and Var (bound to a tape)
// ---------------------------------------------------------------------------

template <class T>
struct GgcmLayer {
    T linear;                 // (k*C_in, C_out)
    std::optional<T> gate;    // (k*C_in, C_out), absent when ungated
    std::optional<T> residual;  // (C_in, C_out), present iff C_in != C_out
    std::size_t patch = 3;
};

template <class T>
struct Encoder {
    std::vector<GgcmLayer<T>> layers;
    std::size_t input_length = 0;
};

template <class T>
struct ChannelAttention {
    T projection;    // (N, d_out): one N -> 1 map per hidden channel
    T time_weights;  // (d_e, d_out)
    T bias;          // (d_out)
};

template <class T>
struct Attention {
    T temporal_projection;  // (h+q, N, d_out): one (N*d_out) -> 1 map per joint frame
    T temporal_time;        // (d_e, h+q)
    T temporal_bias;        // (h+q)
    std::vector<ChannelAttention<T>> channels;  // one block per predicted channel
};

template <class T>
struct Params {
    Hyper hyper;
    Encoder<T> long_encoder;
    Encoder<T> short_encoder;
    std::optional<Attention<T>> attention;
};

using ModelParams = Params<Tensor>;

/// Calls f(name, tensor) for every learnable tensor, in a fixed order.
template <class P, class F>
void for_each_tensor(P& params, F&& f) {
    auto encoder = [&](auto& enc, const std::string& prefix) {
        for (std::size_t i = 0; i < enc.layers.size(); ++i) {
            auto& layer = enc.layers[i];
            const std::string base = prefix + "." + std::to_string(i) + ".";
            f(base + "linear", layer.linear);
            if (layer.gate) f(base + "gate", *layer.gate);
            if (layer.residual) f(base + "residual", *layer.residual);
        }
    };
    encoder(params.long_encoder, "long");
    encoder(params.short_encoder, "short");
    if (params.attention) {
        auto& a = *params.attention;
        f(std::string("attention.temporal.projection"), a.temporal_projection);
        f(std::string("attention.temporal.time"), a.temporal_time);
        f(std::string("attention.temporal.bias"), a.temporal_bias);
        for (std::size_t c = 0; c < a.channels.size(); ++c) {
            const std::string base = "attention.channel." + std::to_string(c) + ".";
            f(base + "projection", a.channels[c].projection);
            f(base + "time", a.channels[c].time_weights);
            f(base + "bias", a.channels[c].bias);
        }
    }
}

/// Same structure with every tensor replaced by f(tensor).
template <class U, class T, class F>
Params<U> map_params(const Params<T>& p, F&& f) {
    auto encoder = [&](const Encoder<T>& enc) {
        Encoder<U> out;
        out.input_length = enc.input_length;
        for (const auto& layer : enc.layers) {
            GgcmLayer<U> l;
            l.linear = f(layer.linear);
            if (layer.gate) l.gate = f(*layer.gate);
            if (layer.residual) l.residual = f(*layer.residual);
            l.patch = layer.patch;
            out.layers.push_back(std::move(l));
        }
        return out;
    };
    Params<U> out;
    out.hyper = p.hyper;
    out.long_encoder = encoder(p.long_encoder);
    out.short_encoder = encoder(p.short_encoder);
    if (p.attention) {
        Attention<U> a;
        a.temporal_projection = f(p.attention->temporal_projection);
        a.temporal_time = f(p.attention->temporal_time);
        a.temporal_bias = f(p.attention->temporal_bias);
        for (const auto& c : p.attention->channels) a.channels.push_back({f(c.projection), f(c.time_weights), f(c.bias)});
        out.attention = std::move(a);
    }
    return out;
}

/// Registers every parameter as a leaf on the tape.
inline Params<Var> bind(Tape& tape, const ModelParams& params, bool requires_grad) {
    return map_params<Var>(params, [&](const Tensor& t) { return tape.leaf(t, requires_grad); });
}

/// Number of scalar parameters.
inline std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for_each_tensor(params, [&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

namespace detail {

inline Tensor uniform_tensor(Shape shape, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng);
    return t;
}

inline Encoder<Tensor> init_encoder(const Hyper& h, std::size_t length, std::size_t layers, std::mt19937_64& rng) {
    Encoder<Tensor> enc;
    enc.input_length = length;
    std::size_t width = h.channels;
    for (std::size_t l = 0; l < layers; ++l) {
        const double fan_in = static_cast<double>(h.patch * width), fan_out = static_cast<double>(h.hidden);
        GgcmLayer<Tensor> layer;
        layer.patch = h.patch;
        layer.linear = uniform_tensor({h.patch * width, h.hidden}, fan_in, fan_out, rng);
        if (h.gated) layer.gate = uniform_tensor({h.patch * width, h.hidden}, fan_in, fan_out, rng);
        if (width != h.hidden) {
            layer.residual = uniform_tensor({width, h.hidden}, static_cast<double>(width), fan_out, rng);
        }
        enc.layers.push_back(std::move(layer));
        width = h.hidden;
    }
    return enc;
}

}  // namespace detail

/// Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)); zero biases.
inline ModelParams init_params(const Hyper& hyper, std::uint64_t seed) {
    const Hyper h = hyper.resolved();
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.hyper = h;
    p.long_encoder = detail::init_encoder(h, h.history, h.long_layers, rng);
    p.short_encoder = detail::init_encoder(h, h.short_window, h.short_layers, rng);
    if (h.attention) {
        const std::size_t m = h.joint_length();
        const double n = static_cast<double>(h.regions), d = static_cast<double>(h.hidden);
        const double de = static_cast<double>(h.time_features);
        Attention<Tensor> a;
        a.temporal_projection = detail::uniform_tensor({m, h.regions, h.hidden}, n * d, 1.0, rng);
        a.temporal_time = detail::uniform_tensor({h.time_features, m}, de, static_cast<double>(m), rng);
        a.temporal_bias = Tensor(Shape{m}, 0.0);
        for (std::size_t c = 0; c < h.channels; ++c) {
            ChannelAttention<Tensor> ca;
            ca.projection = detail::uniform_tensor({h.regions, h.hidden}, n, 1.0, rng);
            ca.time_weights = detail::uniform_tensor({h.time_features, h.hidden}, de, d, rng);
            ca.bias = Tensor(Shape{h.hidden}, 0.0);
            a.channels.push_back(std::move(ca));
        }
        p.attention = std::move(a);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// One gated graph-convolution module over a (L, N, C_in) sequence.
///
/// Output frame i = (P X_i W_lin + R_i) * sigmoid(P X_i W_gate), where X_i
/// is the N x (k*C_in) matrix of padded frames i..i+k-1 flattened oldest
/// first, and R_i is input frame i (projected when widths differ).
inline Var ggcm_forward(const Var& x, const Var& prop, const GgcmLayer<Var>& layer) {
    if (x.rank() != 3) throw DimensionError("ggcm: input must be (L, N, C), got " + to_string(x.shape()));
    const std::size_t len = x.extent(0), n = x.extent(1), c_in = x.extent(2);
    const std::size_t k = layer.patch;
    const Shape& w = layer.linear.shape();
    if (w.size() != 2 || w[0] != k * c_in) {
        throw DimensionError("ggcm: input width " + std::to_string(c_in) + " with patch " + std::to_string(k) +
                             " does not match weights " + to_string(w));
    }
    if (prop.shape() != Shape{n, n}) {
        throw DimensionError("ggcm: propagation matrix " + to_string(prop.shape()) + " does not match " +
                             std::to_string(n) + " regions");
    }
    const std::size_t c_out = w[1];
    if (!layer.residual && c_in != c_out) throw DimensionError("ggcm: width change needs a residual projection");
    if (len == 0) throw DimensionError("ggcm: empty sequence");

    const Var padded = zero_pad(x, 0, k - 1, PadSide::front);
    std::vector<Var> shifted;
    shifted.reserve(k);
    for (std::size_t j = 0; j < k; ++j) shifted.push_back(slice(padded, 0, j, j + len));
    const Var windows = reshape(k == 1 ? shifted.front() : concat(shifted, 2), {len * n, k * c_in});

    auto graph_conv = [&](const Var& weights) {
        return matmul(prop, reshape(matmul(windows, weights), {len, n, c_out}));
    };
    const Var residual =
        layer.residual ? reshape(matmul(reshape(x, {len * n, c_in}), *layer.residual), {len, n, c_out}) : x;
    const Var linear = add(graph_conv(layer.linear), residual);
    if (layer.gate) return mul(linear, sigmoid(graph_conv(*layer.gate)));
    return relu(linear);
}

/// Serial GGCM stack; output length equals input length.
inline Var encoder_forward(const Var& x, const Var& prop, const Encoder<Var>& encoder) {
    if (x.rank() != 3 || (encoder.input_length != 0 && x.extent(0) != encoder.input_length)) {
        throw DimensionError("encoder expects " + std::to_string(encoder.input_length) + " frames, got shape " +
                             to_string(x.shape()));
    }
    Var h = x;
    for (const auto& layer : encoder.layers) h = ggcm_forward(h, prop, layer);
    return h;
}

struct AttentionResult {
    Var prediction;          // (N, d_target)
    Var alpha;               // (h+q)
    std::vector<Var> betas;  // one (d_out) vector per predicted channel
};

/// Reduces a (M, N, d_out) joint representation to one (N, d_target) frame.
/// Without attention parameters both reductions are uniform means.
inline AttentionResult attention_output(const Var& joint, const Var& time_features,
                                        const std::optional<Attention<Var>>& attention, std::size_t target_channels) {
    if (joint.rank() != 3) throw DimensionError("attention: joint representation must be rank 3");
    Tape& tape = *joint.tape();
    const std::size_t m = joint.extent(0), n = joint.extent(1), d = joint.extent(2);
    const Var slices = reshape(joint, {m, n * d});
    AttentionResult out;
    if (!attention) {
        out.alpha = tape.constant(Tensor(Shape{m}, 1.0 / static_cast<double>(m)));
        const Var pooled = reshape(matmul(reshape(out.alpha, {1, m}), slices), {n, d});
        const Var beta = tape.constant(Tensor(Shape{d}, 1.0 / static_cast<double>(d)));
        std::vector<Var> cols;
        for (std::size_t c = 0; c < target_channels; ++c) {
            out.betas.push_back(beta);
            cols.push_back(matmul(pooled, reshape(beta, {d, 1})));
        }
        out.prediction = concat(cols, 1);
        return out;
    }
    const auto& a = *attention;
    if (a.temporal_projection.shape() != joint.shape()) {
        throw DimensionError("attention: joint representation " + to_string(joint.shape()) +
                             " does not match temporal weights " + to_string(a.temporal_projection.shape()));
    }
    if (a.channels.size() != target_channels) throw DimensionError("attention: channel block count mismatch");
    const std::size_t de = a.temporal_time.extent(0);
    if (time_features.value().size() != de) {
        throw DimensionError("attention: expected " + std::to_string(de) + " time features, got shape " +
                             to_string(time_features.shape()));
    }
    const Var e = reshape(time_features, {1, de});

    const Var temporal_scores = sum(reshape(mul(joint, a.temporal_projection), {m, n * d}), 1);
    const Var temporal_time = reshape(matmul(e, a.temporal_time), {m});
    out.alpha = softmax(stg2seq::tanh(add(add(temporal_scores, temporal_time), a.temporal_bias)), 0);
    const Var pooled = reshape(matmul(reshape(out.alpha, {1, m}), slices), {n, d});

    std::vector<Var> cols;
    for (const auto& ch : a.channels) {
        const Var channel_scores = sum(mul(pooled, ch.projection), 0);
        const Var channel_time = reshape(matmul(e, ch.time_weights), {d});
        const Var beta = softmax(stg2seq::tanh(add(add(channel_scores, channel_time), ch.bias)), 0);
        out.betas.push_back(beta);
        cols.push_back(matmul(pooled, reshape(beta, {d, 1})));
    }
    out.prediction = cols.size() == 1 ? cols.front() : concat(cols, 1);
    return out;
}

enum class FeedMode { free_running, teacher_forced };

struct ForecastTrace {
    Var output;                       // (tau, N, d)
    Var long_encoding;                // (h, N, d_out)
    std::vector<Var> short_inputs;    // (q, N, d) per step
    std::vector<AttentionResult> steps;
};

/// Multi-step forecast from h input frames.
///
/// `target_features` holds one calendar row per forecast step. In
/// teacher-forced mode `truth` supplies the frames fed back to the
/// short-term encoder.
inline ForecastTrace forecast_trace(const Params<Var>& params, const Var& prop, const Var& input,
                                    const Var& target_features, FeedMode mode,
                                    const std::optional<Var>& truth = std::nullopt) {
    const Hyper& h = params.hyper;
    if (input.shape() != Shape{h.history, h.regions, h.channels}) {
        throw DimensionError("forecast: input must be " + to_string(Shape{h.history, h.regions, h.channels}) +
                             ", got " + to_string(input.shape()));
    }
    if (target_features.rank() != 2 || target_features.extent(1) != h.time_features) {
        throw DimensionError("forecast: target features must be (tau, d_e), got " + to_string(target_features.shape()));
    }
    const std::size_t horizon = target_features.extent(0);
    if (horizon < 1) throw InputError("forecast: tau must be >= 1");
    if (!h.short_encoder && horizon != 1) {
        throw ConfigError("forecast: a model without short-term encoder predicts one step only");
    }
    if (mode == FeedMode::teacher_forced) {
        if (!truth) throw ContractError("forecast: teacher forcing requires ground truth");
        if (truth->rank() != 3 || truth->extent(0) < horizon || truth->extent(1) != h.regions ||
            truth->extent(2) != h.channels) {
            throw DimensionError("forecast: truth shape " + to_string(truth->shape()) + " does not cover the horizon");
        }
    }

    ForecastTrace trace;
    trace.long_encoding = encoder_forward(input, prop, params.long_encoder);
    std::vector<Var> fed;  // frames produced after the input window, each (1, N, d)
    std::vector<Var> predictions;
    const std::size_t q = h.short_window;
    for (std::size_t s = 0; s < horizon; ++s) {
        Var joint = trace.long_encoding;
        if (h.short_encoder) {
            std::vector<Var> window;
            if (s < q) window.push_back(slice(input, 0, h.history - (q - s), h.history));
            for (std::size_t j = s < q ? 0 : s - q; j < s; ++j) window.push_back(fed[j]);
            const Var recent = window.size() == 1 ? window.front() : concat(window, 0);
            trace.short_inputs.push_back(recent);
            joint = concat({trace.long_encoding, encoder_forward(recent, prop, params.short_encoder)}, 0);
        }
        const Var e = reshape(slice(target_features, 0, s, s + 1), {h.time_features});
        AttentionResult step = attention_output(joint, e, params.attention, h.channels);
        const Var frame = reshape(step.prediction, {1, h.regions, h.channels});
        predictions.push_back(frame);
        fed.push_back(mode == FeedMode::teacher_forced ? slice(*truth, 0, s, s + 1) : frame);
        trace.steps.push_back(std::move(step));
    }
    trace.output = predictions.size() == 1 ? predictions.front() : concat(predictions, 0);
    return trace;
}

inline Var forecast(const Params<Var>& params, const Var& prop, const Var& input, const Var& target_features,
                    FeedMode mode, const std::optional<Var>& truth = std::nullopt) {
    return forecast_trace(params, prop, input, target_features, mode, truth).output;
}

/// Inference on plain tensors: builds a gradient-free tape and returns (tau, N, d).
inline Tensor predict(const ModelParams& params, const Tensor& prop, const Tensor& input,
                      const Tensor& target_features, FeedMode mode = FeedMode::free_running,
                      const std::optional<Tensor>& truth = std::nullopt) {
    Tape tape;
    const auto bound = bind(tape, params, false);
    std::optional<Var> t;
    if (truth) t = tape.constant(*truth);
    return forecast(bound, tape.constant(prop), tape.constant(input), tape.constant(target_features), mode, t).value();
}

}  // namespace stg2seq
