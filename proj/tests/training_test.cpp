#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stg2seq/graph.hpp"
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

Tensor toy_prop() { return propagation_matrix(Tensor::matrix({{0, 1, 0, 0}, {1, 0, 1, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}})); }

std::vector<Sample> toy_samples(std::size_t count, std::uint64_t seed, std::size_t tau = 2) {
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor feats(Shape{tau, 6}, 0.0);
        for (std::size_t s = 0; s < tau; ++s) feats.at(s, (i + s) % 6) = 1.0;
        out.push_back({random_tensor({5, 4, 1}, rng, 0, 1), random_tensor({tau, 4, 1}, rng, 0, 1), feats, i});
    }
    return out;
}

}  // namespace

TEST(SequenceLoss, Examples) {
    const Tensor z(Shape{2, 3, 1}, 0.4);
    EXPECT_EQ(sequence_loss(z, z), 0.0);
    EXPECT_EQ(sequence_loss(Tensor(Shape{1, 1, 1}, 0.5), Tensor(Shape{1, 1, 1}, 0.0)), 0.25);
    // Step one contributes 0.5^2, step two 0.5^2 + sqrt(0.5)^2.
    const Tensor pred(Shape{2, 2, 1}, {0.5, 0.0, 0.5, std::sqrt(0.5)});
    EXPECT_NEAR(sequence_loss(pred, Tensor(Shape{2, 2, 1}, 0.0)), 1.0, 1e-15);
    EXPECT_THROW(sequence_loss(pred, Tensor(Shape{2, 1, 2}, 0.0)), DimensionError);
}

TEST(SequenceLoss, NonNegativeAndZeroOnlyAtTruth) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        const Tensor a = random_tensor({3, 4, 2}, rng), b = random_tensor({3, 4, 2}, rng);
        EXPECT_GT(sequence_loss(a, b), 0.0);
        EXPECT_EQ(sequence_loss(a, a), 0.0);
    }
}

TEST(Adam, ZeroGradientIsBitExactNoOp) {
    std::mt19937_64 rng(2);
    Tensor theta = random_tensor({3, 4}, rng);
    const Tensor before = theta;
    ParamRefs refs{{"theta", &theta}};
    AdamState state;
    adam_step(refs, {Tensor(Shape{3, 4}, 0.0)}, state, TrainConfig{});
    EXPECT_EQ(theta, before);
    EXPECT_EQ(state.m[0], Tensor(Shape{3, 4}, 0.0));
    EXPECT_EQ(state.v[0], Tensor(Shape{3, 4}, 0.0));
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    // t=1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
    Tensor theta = Tensor::scalar(0.0);
    ParamRefs refs{{"theta", &theta}};
    AdamState state;
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    adam_step(refs, {Tensor::scalar(1.0)}, state, cfg);
    EXPECT_NEAR(theta.item(), -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, DecreasesConvexQuadratic) {
    Tensor theta = Tensor::scalar(2.0);
    ParamRefs refs{{"theta", &theta}};
    AdamState state;
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    double prev = theta.item() * theta.item();
    for (int i = 0; i < 2; ++i) {
        adam_step(refs, {Tensor::scalar(2.0 * theta.item())}, state, cfg);
        const double now = theta.item() * theta.item();
        EXPECT_LT(now, prev);
        prev = now;
    }
}

TEST(Adam, NanGradientNamesTheTensor) {
    Tensor theta = Tensor::scalar(1.0);
    ParamRefs refs{{"long.0.gate", &theta}};
    AdamState state;
    try {
        adam_step(refs, {Tensor::scalar(std::nan(""))}, state, TrainConfig{});
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("long.0.gate"), std::string::npos);
    }
    EXPECT_EQ(theta.item(), 1.0);
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    cfg.learning_rate = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.beta2 = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, SingleSampleOverfit) {
    auto params = init_params(toy_hyper(), 7);
    const auto samples = toy_samples(1, 3);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 1;
    cfg.max_epochs = 2000;
    cfg.early_stopping = false;
    double reached = -1;
    std::size_t epoch_hit = 0;
    TrainHooks hooks;
    hooks.epoch_end = [&](const EpochRecord& r) {
        if (epoch_hit == 0 && r.train_loss < 1e-3) {
            epoch_hit = r.epoch;
            reached = r.train_loss;
        }
    };
    train(params, samples, toy_prop(), cfg, hooks);
    EXPECT_GT(epoch_hit, 0u) << "loss never dropped below 1e-3";
    EXPECT_LT(reached, 1e-3);
    EXPECT_LT(mean_loss(params, toy_prop(), samples, FeedMode::teacher_forced), 1e-3);
}

TEST(Train, SameSeedSameHistory) {
    const auto samples = toy_samples(10, 4);
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.max_epochs = 5;
    cfg.seed = 99;
    auto a = init_params(toy_hyper(), 1);
    auto b = init_params(toy_hyper(), 1);
    const auto ra = train(a, samples, toy_prop(), cfg);
    const auto rb = train(b, samples, toy_prop(), cfg);
    ASSERT_EQ(ra.history.size(), rb.history.size());
    for (std::size_t i = 0; i < ra.history.size(); ++i) EXPECT_EQ(ra.history[i].train_loss, rb.history[i].train_loss);
    auto ra_refs = parameter_refs(a), rb_refs = parameter_refs(b);
    for (std::size_t i = 0; i < ra_refs.size(); ++i) EXPECT_EQ(*ra_refs[i].second, *rb_refs[i].second);
}

TEST(Train, BatchGradientIsMeanOfSampleGradients) {
    const auto samples = toy_samples(3, 5);
    const auto params = init_params(toy_hyper(), 2);
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.max_epochs = 1;
    cfg.shuffle = false;
    cfg.learning_rate = 0.01;
    auto trained = params;
    train(trained, samples, toy_prop(), cfg);

    std::vector<Tensor> mean_grads;
    for (const auto& s : samples) {
        auto g = sample_gradient(params, toy_prop(), s, FeedMode::teacher_forced).grads;
        if (mean_grads.empty()) {
            mean_grads = g;
        } else {
            for (std::size_t p = 0; p < g.size(); ++p)
                for (std::size_t j = 0; j < g[p].size(); ++j) mean_grads[p][j] += g[p][j];
        }
    }
    for (auto& g : mean_grads)
        for (double& v : g.data()) v /= 3.0;
    auto expected = params;
    AdamState state;
    adam_step(parameter_refs(expected), mean_grads, state, cfg);
    auto e = parameter_refs(expected), t = parameter_refs(trained);
    for (std::size_t i = 0; i < e.size(); ++i) EXPECT_LT(max_abs_difference(*e[i].second, *t[i].second), 1e-12);
}

TEST(Train, EarlyStoppingRestoresBestValidationParameters) {
    const auto samples = toy_samples(20, 6);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 40;
    cfg.learning_rate = 0.05;
    cfg.early_stopping = true;
    cfg.patience = 3;
    auto params = init_params(toy_hyper(), 3);
    const auto r = train(params, samples, toy_prop(), cfg);
    ASSERT_FALSE(r.history.empty());
    double best = r.history.front().validation_loss.value();
    for (const auto& rec : r.history) best = std::min(best, rec.validation_loss.value());
    const std::vector<Sample> validation(samples.end() - 2, samples.end());
    EXPECT_EQ(mean_loss(params, toy_prop(), validation, FeedMode::free_running), best);
    EXPECT_EQ(r.history[r.best_epoch - 1].validation_loss.value(), best);
    if (r.stopped_early) {
        EXPECT_EQ(r.history.size(), r.best_epoch + cfg.patience);
    }
}

TEST(Train, CheckpointHookFiresOnSchedule) {
    const auto samples = toy_samples(4, 7);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.max_epochs = 7;
    cfg.checkpoint_every = 3;
    std::vector<std::size_t> epochs;
    TrainHooks hooks;
    hooks.checkpoint = [&](const ModelParams&, const TrainResult& r) { epochs.push_back(r.history.back().epoch); };
    auto params = init_params(toy_hyper(), 4);
    train(params, samples, toy_prop(), cfg, hooks);
    EXPECT_EQ(epochs, (std::vector<std::size_t>{3, 6}));
}

TEST(Train, DivergenceReportsLastGoodParameters) {
    const auto samples = toy_samples(4, 8);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 50;
    cfg.learning_rate = 1e300;  // first update overflows activations
    auto params = init_params(toy_hyper(), 5);
    bool called = false;
    TrainHooks hooks;
    hooks.diverged = [&](const ModelParams& good, const TrainResult&) {
        called = true;
        for_each_tensor(good, [](const std::string&, const Tensor& t) { EXPECT_TRUE(t.all_finite()); });
    };
    EXPECT_THROW(train(params, samples, toy_prop(), cfg, hooks), NumericalError);
    EXPECT_TRUE(called);
}

TEST(Train, AblationsTrainOnToyConfig) {
    for (int variant = 0; variant < 3; ++variant) {
        Hyper h = toy_hyper();
        if (variant == 0) h.short_encoder = false;
        if (variant == 1) h.gated = false;
        if (variant == 2) h.attention = false;
        auto params = init_params(h, 6);
        const auto samples = toy_samples(6, 9, params.hyper.horizon);
        TrainConfig cfg;
        cfg.batch_size = 3;
        cfg.max_epochs = 3;
        const auto r = train(params, samples, toy_prop(), cfg);
        EXPECT_EQ(r.history.size(), 3u);
        for (const auto& rec : r.history) EXPECT_TRUE(std::isfinite(rec.train_loss));
        if (variant == 0) {
            EXPECT_EQ(params.hyper.horizon, 1u);
        }
    }
}

TEST(Train, TeacherForcingComparisonIsRecorded) {
    // Expectation only: free running should not train faster than teacher forcing.
    const auto samples = toy_samples(8, 10);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 50;
    cfg.learning_rate = 1e-2;
    auto teacher = init_params(toy_hyper(), 8);
    auto free = teacher;
    const auto rt = train(teacher, samples, toy_prop(), cfg);
    cfg.teacher_forcing = false;
    const auto rf = train(free, samples, toy_prop(), cfg);
    RecordProperty("teacher_forced_epoch50", std::to_string(rt.history.back().train_loss));
    RecordProperty("free_running_epoch50", std::to_string(rf.history.back().train_loss));
    EXPECT_TRUE(std::isfinite(rt.history.back().train_loss) && std::isfinite(rf.history.back().train_loss));
}
