#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stg2seq/graph.hpp"
#include "stg2seq/model.hpp"
#include "stg2seq/training.hpp"
#include "test_helpers.hpp"

using namespace stg2seq;
using stg2seq::testing::random_tensor;

namespace {

Hyper toy_hyper() {
    Hyper h;
    h.regions = 4;
    h.channels = 1;
    h.time_features = 6;
    h.history = 5;
    h.short_window = 3;
    h.patch = 3;
    h.horizon = 2;
    h.hidden = 4;
    return h;
}

Tensor random_prop(std::size_t n, std::mt19937_64& rng) {
    std::bernoulli_distribution edge(0.4);
    Tensor a(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (edge(rng)) a.at(i, j) = a.at(j, i) = 1.0;
    return propagation_matrix(a);
}

Tensor one_hot_rows(std::size_t rows, std::size_t width, std::mt19937_64& rng) {
    Tensor t(Shape{rows, width}, 0.0);
    for (std::size_t r = 0; r < rows; ++r) t.at(r, rng() % width) = 1.0;
    return t;
}

GgcmLayer<Tensor> random_layer(std::size_t c_in, std::size_t c_out, std::size_t k, std::mt19937_64& rng,
                               bool gated = true) {
    GgcmLayer<Tensor> l;
    l.patch = k;
    l.linear = random_tensor({k * c_in, c_out}, rng, -1, 1);
    if (gated) l.gate = random_tensor({k * c_in, c_out}, rng, -1, 1);
    if (c_in != c_out) l.residual = random_tensor({c_in, c_out}, rng, -1, 1);
    return l;
}

GgcmLayer<Var> bind_layer(Tape& tape, const GgcmLayer<Tensor>& l) {
    GgcmLayer<Var> out;
    out.patch = l.patch;
    out.linear = tape.constant(l.linear);
    if (l.gate) out.gate = tape.constant(*l.gate);
    if (l.residual) out.residual = tape.constant(*l.residual);
    return out;
}

Tensor run_layer(const GgcmLayer<Tensor>& l, const Tensor& prop, const Tensor& x) {
    Tape tape;
    return ggcm_forward(tape.constant(x), tape.constant(prop), bind_layer(tape, l)).value();
}

Encoder<Tensor> random_encoder(std::size_t length, std::size_t c_in, std::size_t width, std::size_t layers,
                               std::size_t k, std::mt19937_64& rng) {
    Encoder<Tensor> enc;
    enc.input_length = length;
    for (std::size_t i = 0; i < layers; ++i) enc.layers.push_back(random_layer(i == 0 ? c_in : width, width, k, rng));
    return enc;
}

Tensor run_encoder(const Encoder<Tensor>& enc, const Tensor& prop, const Tensor& x) {
    Tape tape;
    Encoder<Var> bound;
    bound.input_length = enc.input_length;
    for (const auto& l : enc.layers) bound.layers.push_back(bind_layer(tape, l));
    return encoder_forward(tape.constant(x), tape.constant(prop), bound).value();
}

Tensor frame(const Tensor& x, std::size_t i) {
    const std::size_t f = x.size() / x.extent(0);
    return Tensor(Shape{f}, std::vector<double>(x.values().begin() + static_cast<std::ptrdiff_t>(i * f),
                                                x.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * f)));
}

}  // namespace

TEST(Ggcm, HandEvaluatedSingleRegion) {
    // N=1 with no edges gives prop=[[1]]. k=2, C=1, linear weights [[1],[0]] pick
    // the older frame of each window; the residual adds the current frame. A
    // gate logit of 1000 * (frame sum) saturates sigmoid to exactly 1.
    // Windows: [0, a] -> 0*1 + a*0 + a = a ; [a, b] -> a*1 + b*0 + b = a + b.
    GgcmLayer<Tensor> l;
    l.patch = 2;
    l.linear = Tensor::matrix({{1}, {0}});
    l.gate = Tensor::matrix({{1000}, {1000}});
    const Tensor prop = propagation_matrix(Tensor(Shape{1, 1}, 0.0));
    const double a = 2.0, b = 3.0;
    const Tensor out = run_layer(l, prop, Tensor(Shape{2, 1, 1}, {a, b}));
    EXPECT_EQ(out.shape(), (Shape{2, 1, 1}));
    EXPECT_EQ(out[0], a);
    EXPECT_EQ(out[1], a + b);
}

TEST(Ggcm, CausalOutputIgnoresFutureFramesBitExactly) {
    std::mt19937_64 rng(100);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t len = 2 + rng() % 10, n = 1 + rng() % 6, c_in = 1 + rng() % 3, c_out = 1 + rng() % 4;
        const std::size_t k = 2 + rng() % 3;
        const auto layer = random_layer(c_in, c_out, k, rng, trial % 2 == 0);
        const Tensor prop = random_prop(n, rng);
        const Tensor x = random_tensor({len, n, c_in}, rng);
        const Tensor full = run_layer(layer, prop, x);
        const std::size_t i = rng() % len;
        Tensor cut = x;
        for (std::size_t j = (i + 1) * n * c_in; j < cut.size(); ++j) cut[j] = 0.0;
        const Tensor partial = run_layer(layer, prop, cut);
        for (std::size_t f = 0; f <= i; ++f) EXPECT_EQ(frame(full, f), frame(partial, f));
    }
}

TEST(Ggcm, SaturatedGateLeavesLinearPathPlusResidual) {
    std::mt19937_64 rng(101);
    auto layer = random_layer(2, 3, 3, rng);
    const Tensor prop = random_prop(4, rng);
    const Tensor x = random_tensor({5, 4, 2}, rng, 0.5, 1.5);
    layer.gate = Tensor(Shape{6, 3}, 200.0);  // positive inputs and a non-negative prop => huge logits
    const Tensor gated = run_layer(layer, prop, x);
    auto plain = layer;
    plain.gate.reset();
    // Ungated layers apply relu; compare against the raw linear path instead.
    Tape tape;
    const auto bl = bind_layer(tape, plain);
    const Var xv = tape.constant(x);
    const Var windows = reshape(concat({slice(zero_pad(xv, 0, 2, PadSide::front), 0, 0, 5),
                                        slice(zero_pad(xv, 0, 2, PadSide::front), 0, 1, 6),
                                        slice(zero_pad(xv, 0, 2, PadSide::front), 0, 2, 7)},
                                       2),
                                {20, 6});
    const Var lin = add(matmul(tape.constant(prop), reshape(matmul(windows, bl.linear), {5, 4, 3})),
                        reshape(matmul(reshape(xv, {20, 2}), *bl.residual), {5, 4, 3}));
    EXPECT_LT(max_abs_difference(gated, lin.value()), 1e-12);
}

TEST(Ggcm, WidthMismatchIsDimensionError) {
    std::mt19937_64 rng(102);
    const auto layer = random_layer(2, 3, 3, rng);
    EXPECT_THROW(run_layer(layer, random_prop(4, rng), random_tensor({5, 4, 3}, rng)), DimensionError);
    EXPECT_THROW(run_layer(layer, random_prop(3, rng), random_tensor({5, 4, 2}, rng)), DimensionError);
}

TEST(Encoder, ZeroInputGivesZeroOutput) {
    std::mt19937_64 rng(103);
    const auto enc = random_encoder(12, 2, 8, 6, 3, rng);
    const Tensor out = run_encoder(enc, random_prop(5, rng), Tensor(Shape{12, 5, 2}, 0.0));
    EXPECT_EQ(out.shape(), (Shape{12, 5, 8}));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, ReceptiveFieldGrowsWithDepth) {
    std::mt19937_64 rng(104);
    const Tensor prop = random_prop(4, rng);
    const Tensor x = random_tensor({12, 4, 1}, rng);
    Tensor bumped = x;
    for (std::size_t r = 0; r < 4; ++r) bumped.at(0, r, 0) += 1e-3;
    const std::size_t last = 11;

    const auto deep = random_encoder(12, 1, 6, layers_for_receptive_field(12, 3), 3, rng);
    ASSERT_EQ(deep.layers.size(), 6u);
    const Tensor d0 = frame(run_encoder(deep, prop, x), last);
    const Tensor d1 = frame(run_encoder(deep, prop, bumped), last);
    EXPECT_GT(max_abs_difference(d0, d1), 1e-9);

    const auto shallow = random_encoder(12, 1, 6, 1, 3, rng);
    EXPECT_EQ(frame(run_encoder(shallow, prop, x), last), frame(run_encoder(shallow, prop, bumped), last));
}

TEST(Encoder, LayerCountFormula) {
    EXPECT_EQ(layers_for_receptive_field(12, 3), 6u);
    EXPECT_EQ(layers_for_receptive_field(3, 3), 1u);
    EXPECT_EQ(layers_for_receptive_field(5, 3), 2u);
    EXPECT_EQ(layers_for_receptive_field(5, 2), 4u);
    EXPECT_EQ(layers_for_receptive_field(12, 2), 11u);
}

TEST(Attention, EqualTemporalLogitsAverageTheSlices) {
    std::mt19937_64 rng(105);
    const std::size_t m = 7, n = 3, d = 4, de = 5;
    Attention<Tensor> a;
    a.temporal_projection = Tensor(Shape{m, n, d}, 0.0);
    a.temporal_time = Tensor(Shape{de, m}, 0.0);
    a.temporal_bias = Tensor(Shape{m}, 0.3);
    a.channels.push_back({random_tensor({n, d}, rng), random_tensor({de, d}, rng), Tensor(Shape{d}, 0.0)});
    const Tensor joint = random_tensor({m, n, d}, rng);
    Tape tape;
    std::optional<Attention<Var>> av = Attention<Var>{tape.constant(a.temporal_projection), tape.constant(a.temporal_time),
                                                      tape.constant(a.temporal_bias), {}};
    av->channels.push_back({tape.constant(a.channels[0].projection), tape.constant(a.channels[0].time_weights),
                            tape.constant(a.channels[0].bias)});
    const auto out = attention_output(tape.constant(joint), tape.constant(one_hot_rows(1, de, rng).reshaped({de})), av, 1);
    for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(out.alpha.value()[i], 1.0 / m, 1e-15);
    // Mean slice, then the beta-weighted channel sum.
    const Tensor& beta = out.betas[0].value();
    for (std::size_t r = 0; r < n; ++r) {
        double expected = 0;
        for (std::size_t c = 0; c < d; ++c) {
            double mean_slice = 0;
            for (std::size_t i = 0; i < m; ++i) mean_slice += joint.at(i, r, c);
            expected += beta[c] * mean_slice / m;
        }
        EXPECT_NEAR(out.prediction.value().at(r, 0), expected, 1e-12);
    }
}

TEST(Attention, SaturatedChannelScoresSelectTheWeightedSlice) {
    // tanh bounds every logit to [-1, 1], so the most extreme channel weights
    // reachable with d_out=2 are softmax([1, -1]).
    std::mt19937_64 rng(106);
    const std::size_t m = 4, n = 3, d = 2, de = 3;
    Tape tape;
    Attention<Var> a{tape.constant(random_tensor({m, n, d}, rng)), tape.constant(random_tensor({de, m}, rng)),
                     tape.constant(Tensor(Shape{m}, 0.0)), {}};
    a.channels.push_back({tape.constant(Tensor(Shape{n, d}, 0.0)), tape.constant(Tensor(Shape{de, d}, 0.0)),
                          tape.constant(Tensor::vector({500.0, -500.0}))});
    const Tensor joint = random_tensor({m, n, d}, rng);
    const auto out = attention_output(tape.constant(joint), tape.constant(Tensor::vector({0, 1, 0})), a, 1);
    const Tensor& beta = out.betas[0].value();
    const double hi = std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
    EXPECT_NEAR(beta[0], hi, 1e-15);
    EXPECT_NEAR(beta[1], 1.0 - hi, 1e-15);
    for (std::size_t r = 0; r < n; ++r) {
        double slice0 = 0, slice1 = 0;
        for (std::size_t i = 0; i < m; ++i) {
            slice0 += out.alpha.value()[i] * joint.at(i, r, 0);
            slice1 += out.alpha.value()[i] * joint.at(i, r, 1);
        }
        EXPECT_NEAR(out.prediction.value().at(r, 0), beta[0] * slice0 + beta[1] * slice1, 1e-12);
    }
}

TEST(Attention, WeightsArePositiveAndNormalized) {
    std::mt19937_64 rng(107);
    Hyper h = toy_hyper();
    h.channels = 2;
    for (int trial = 0; trial < 50; ++trial) {
        const auto params = init_params(h, trial);
        Tape tape;
        const auto bound = bind(tape, params, false);
        const auto trace = forecast_trace(bound, tape.constant(random_prop(4, rng)),
                                          tape.constant(random_tensor({5, 4, 2}, rng)),
                                          tape.constant(one_hot_rows(2, 6, rng)), FeedMode::free_running);
        for (const auto& step : trace.steps) {
            double s = 0;
            for (double v : step.alpha.value().data()) {
                EXPECT_GT(v, 0.0);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
            ASSERT_EQ(step.betas.size(), 2u);
            for (const auto& b : step.betas) {
                double sb = 0;
                for (double v : b.value().data()) {
                    EXPECT_GT(v, 0.0);
                    sb += v;
                }
                EXPECT_NEAR(sb, 1.0, 1e-9);
            }
        }
    }
}

TEST(Forecast, SingleStepIsIdenticalInBothModes) {
    std::mt19937_64 rng(108);
    Hyper h = toy_hyper();
    h.horizon = 1;
    const auto params = init_params(h, 3);
    const Tensor prop = random_prop(4, rng);
    const Tensor input = random_tensor({5, 4, 1}, rng, 0, 1);
    const Tensor feats = one_hot_rows(1, 6, rng);
    const Tensor truth = random_tensor({1, 4, 1}, rng, 0, 1);
    EXPECT_EQ(predict(params, prop, input, feats, FeedMode::free_running),
              predict(params, prop, input, feats, FeedMode::teacher_forced, truth));
}

TEST(Forecast, FeedingPredictionsAsTruthReproducesFreeRunning) {
    std::mt19937_64 rng(109);
    Hyper h = toy_hyper();
    h.horizon = 4;
    const auto params = init_params(h, 4);
    const Tensor prop = random_prop(4, rng);
    const Tensor input = random_tensor({5, 4, 1}, rng, 0, 1);
    const Tensor feats = one_hot_rows(4, 6, rng);
    const Tensor free = predict(params, prop, input, feats, FeedMode::free_running);
    EXPECT_EQ(predict(params, prop, input, feats, FeedMode::teacher_forced, free), free);
}

TEST(Forecast, ShortTermWindowSlidesOverFedFrames) {
    std::mt19937_64 rng(110);
    Hyper h = toy_hyper();
    h.horizon = 4;
    const auto params = init_params(h, 5);
    const Tensor input = random_tensor({5, 4, 1}, rng, 0, 1);
    const Tensor truth = random_tensor({4, 4, 1}, rng, 0, 1);
    const Tensor feats = one_hot_rows(4, 6, rng);
    const Tensor prop = random_prop(4, rng);
    for (FeedMode mode : {FeedMode::free_running, FeedMode::teacher_forced}) {
        Tape tape;
        const auto bound = bind(tape, params, false);
        const auto trace = forecast_trace(bound, tape.constant(prop), tape.constant(input), tape.constant(feats), mode,
                                          tape.constant(truth));
        const Tensor out = trace.output.value();
        const Tensor& source = mode == FeedMode::free_running ? out : truth;
        ASSERT_EQ(trace.short_inputs.size(), 4u);
        // Step t+1 sees D_{t-2}, D_{t-1}, D_t.
        const Tensor s0 = trace.short_inputs[0].value();
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(frame(s0, j), frame(input, 2 + j));
        // Step t+2 sees D_{t-1}, D_t and the fed frame for t+1.
        const Tensor s1 = trace.short_inputs[1].value();
        EXPECT_EQ(frame(s1, 0), frame(input, 3));
        EXPECT_EQ(frame(s1, 1), frame(input, 4));
        EXPECT_EQ(frame(s1, 2), frame(source, 0));
        // Step t+4 sees only fed frames.
        const Tensor s3 = trace.short_inputs[3].value();
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(frame(s3, j), frame(source, j));
    }
}

TEST(Forecast, TeacherForcingRequiresTruth) {
    const auto params = init_params(toy_hyper(), 1);
    Tape tape;
    const auto bound = bind(tape, params, false);
    EXPECT_THROW(forecast(bound, tape.constant(propagation_matrix(Tensor(Shape{4, 4}, 0.0))),
                          tape.constant(Tensor(Shape{5, 4, 1})), tape.constant(Tensor(Shape{2, 6})),
                          FeedMode::teacher_forced),
                 ContractError);
}

TEST(Forecast, DeterministicAcrossRuns) {
    std::mt19937_64 rng(111);
    Hyper h = toy_hyper();
    h.regions = 6;
    h.channels = 2;
    const auto params = init_params(h, 8);
    const Tensor prop = random_prop(6, rng);
    const Tensor input = random_tensor({5, 6, 2}, rng, 0, 1);
    const Tensor feats = one_hot_rows(2, 6, rng);
    EXPECT_EQ(predict(params, prop, input, feats), predict(params, prop, input, feats));
}

TEST(Forecast, RegionPermutationEquivariance) {
    // The output module weights are indexed by region, so they are permuted
    // together with the inputs and the graph.
    std::mt19937_64 rng(112);
    Hyper h = toy_hyper();
    h.regions = 7;
    h.channels = 2;
    h.horizon = 3;
    const std::size_t n = 7;
    auto params = init_params(h, 9);
    std::bernoulli_distribution edge(0.4);
    Tensor adj(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (edge(rng)) adj.at(i, j) = adj.at(j, i) = 1.0;
    const Tensor input = random_tensor({5, n, 2}, rng, 0, 1);
    const Tensor feats = one_hot_rows(3, 6, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    auto permute_axis = [&](const Tensor& t, std::size_t axis) {
        Tensor out = t;
        if (axis == 0) {  // (N, ...) leading region axis
            const std::size_t row = t.size() / t.extent(0);
            for (std::size_t r = 0; r < n; ++r)
                std::copy_n(t.values().begin() + static_cast<std::ptrdiff_t>(perm[r] * row), row,
                            out.data().begin() + static_cast<std::ptrdiff_t>(r * row));
        } else {  // (L, N, C)
            for (std::size_t l = 0; l < t.extent(0); ++l)
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < t.extent(2); ++c) out.at(l, r, c) = t.at(l, perm[r], c);
        }
        return out;
    };
    Tensor adj_p(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) adj_p.at(i, j) = adj.at(perm[i], perm[j]);

    auto permuted = params;
    permuted.attention->temporal_projection = permute_axis(params.attention->temporal_projection, 1);
    for (auto& ch : permuted.attention->channels) ch.projection = permute_axis(ch.projection, 0);

    const Tensor base = predict(params, propagation_matrix(adj), input, feats);
    const Tensor moved = predict(permuted, propagation_matrix(adj_p), permute_axis(input, 1), feats);
    EXPECT_LT(max_abs_difference(moved, permute_axis(base, 1)), 1e-10);
}

TEST(InitParams, DeterministicBoundedAndSeedSensitive) {
    const Hyper h = toy_hyper();
    const auto a = init_params(h, 42);
    const auto b = init_params(h, 42);
    const auto c = init_params(h, 43);
    bool any_diff = false;
    std::vector<const Tensor*> tb, tc;
    for_each_tensor(b, [&](const std::string&, const Tensor& t) { tb.push_back(&t); });
    for_each_tensor(c, [&](const std::string&, const Tensor& t) { tc.push_back(&t); });
    std::size_t i = 0;
    for_each_tensor(a, [&](const std::string& name, const Tensor& t) {
        EXPECT_EQ(t, *tb[i]) << name;
        any_diff = any_diff || !(t == *tc[i]);
        EXPECT_TRUE(t.all_finite());
        ++i;
    });
    EXPECT_TRUE(any_diff);

    // Glorot bounds of a few representative tensors.
    const double s_first = std::sqrt(6.0 / (3.0 * 1 + 4));
    for (double v : a.long_encoder.layers[0].linear.data()) EXPECT_LE(std::abs(v), s_first);
    const double s_temporal = std::sqrt(6.0 / (4.0 * 4 + 1));
    for (double v : a.attention->temporal_projection.data()) EXPECT_LE(std::abs(v), s_temporal);
    for (double v : a.attention->temporal_bias.data()) EXPECT_EQ(v, 0.0);
    for (double v : a.attention->channels[0].bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(InitParams, StructureFollowsHyper) {
    const auto p = init_params(toy_hyper(), 1);
    EXPECT_EQ(p.long_encoder.layers.size(), 2u);
    EXPECT_EQ(p.short_encoder.layers.size(), 1u);
    EXPECT_TRUE(p.long_encoder.layers[0].residual.has_value());   // 1 -> 4 channels
    EXPECT_FALSE(p.long_encoder.layers[1].residual.has_value());  // 4 -> 4
    EXPECT_EQ(p.attention->temporal_projection.shape(), (Shape{8, 4, 4}));
    EXPECT_EQ(p.attention->temporal_time.shape(), (Shape{6, 8}));
    EXPECT_EQ(p.attention->channels.size(), 1u);
    EXPECT_EQ(p.attention->channels[0].projection.shape(), (Shape{4, 4}));
}

TEST(Hyper, ConstraintViolationsAreConfigErrors) {
    Hyper h = toy_hyper();
    h.short_window = 5;  // h > q violated
    EXPECT_THROW(init_params(h, 0), ConfigError);
    h = toy_hyper();
    h.patch = 4;  // q >= k violated
    EXPECT_THROW(init_params(h, 0), ConfigError);
    h = toy_hyper();
    h.long_layers = 1;  // cannot cover 5 frames with k=3
    EXPECT_THROW(init_params(h, 0), ConfigError);
    h = toy_hyper();
    h.horizon = 0;
    EXPECT_THROW(init_params(h, 0), ConfigError);
}

TEST(Hyper, RemovingShortEncoderForcesSingleStep) {
    Hyper h = toy_hyper();
    h.short_encoder = false;
    const auto p = init_params(h, 0);
    EXPECT_EQ(p.hyper.horizon, 1u);
    EXPECT_TRUE(p.short_encoder.layers.empty());
    EXPECT_EQ(p.attention->temporal_projection.extent(0), 5u);
}

TEST(ModelGradient, MatchesFiniteDifferencesOnToyConfig) {
    std::mt19937_64 rng(113);
    const Hyper h = toy_hyper();
    const auto params = init_params(h, 11);
    const Tensor prop = random_prop(4, rng);
    Sample s{random_tensor({5, 4, 1}, rng, 0, 1), random_tensor({2, 4, 1}, rng, 0, 1), one_hot_rows(2, 6, rng), 4};

    for (FeedMode mode : {FeedMode::teacher_forced, FeedMode::free_running}) {
        const auto grads = sample_gradient(params, prop, s, mode).grads;
        std::size_t index = 0, total = 0, over = 0;
        double worst = 0;
        for_each_tensor(params, [&](const std::string& name, const Tensor& t) {
            for (std::size_t j = 0; j < t.size(); ++j) {
                auto eval = [&](double delta) {
                    auto p = params;
                    std::size_t k = 0;
                    for_each_tensor(p, [&](const std::string&, Tensor& u) {
                        if (k++ == index) u[j] += delta;
                    });
                    const std::optional<Tensor> truth =
                        mode == FeedMode::teacher_forced ? std::optional<Tensor>(s.targets) : std::nullopt;
                    return sequence_loss(predict(p, prop, s.input, s.target_features, mode, truth), s.targets);
                };
                const double fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
                const double err = relative_gradient_error(grads[index][j], fd);
                worst = std::max(worst, err);
                over += err >= 1e-4;
                ++total;
                EXPECT_LT(err, 1e-3) << name << "[" << j << "]";
            }
            ++index;
        });
        EXPECT_LE(static_cast<double>(over), 0.01 * static_cast<double>(total)) << "worst " << worst;
    }
}

TEST(ModelGradient, EveryParameterReceivesGradient) {
    std::mt19937_64 rng(114);
    for (bool gated : {true, false}) {
        Hyper h = toy_hyper();
        h.gated = gated;
        const auto params = init_params(h, 12);
        Sample s{random_tensor({5, 4, 1}, rng, 0.2, 1), random_tensor({2, 4, 1}, rng, 0, 1), one_hot_rows(2, 6, rng), 4};
        const auto grads = sample_gradient(params, random_prop(4, rng), s, FeedMode::teacher_forced).grads;
        std::size_t i = 0;
        for_each_tensor(params, [&](const std::string& name, const Tensor&) {
            double mass = 0;
            for (double v : grads[i].data()) mass += std::abs(v);
            // Bias entries are hit through every step, so no tensor is exempt.
            EXPECT_GT(mass, 0.0) << name;
            ++i;
        });
    }
}
