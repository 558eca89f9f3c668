// stg2seq: command-line front end.
//
// Exit codes: 0 success, 1 input/schema/config error, 2 numerical failure,
// 3 self-test failure. Every flag can also be set through an environment
// variable named STG2SEQ_<FLAG> (upper case, dashes as underscores).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"

#include "stg2seq/stg2seq.hpp"

namespace fs = std::filesystem;
using namespace stg2seq;

namespace {

std::string env_name(const std::string& flag) {
    std::string out = "STG2SEQ_";
    for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

template <class T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& value, const std::string& help) {
    return app->add_option("--" + name, value, help)->envname(env_name(name));
}

void log(const std::string& line) { std::cerr << line << std::endl; }

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    return experiment_config_from_json(parse_json(read_file(path), path), path);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    SynthConfig cfg;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    const auto data = synthesize(a.cfg);
    save_dataset(a.out, data.demand, data.config);
    log("wrote " + std::to_string(a.cfg.steps) + " steps x " + std::to_string(a.cfg.regions) + " regions to " + a.out);
    return 0;
}

struct GraphArgs {
    std::string data, out;
    double epsilon = 0.1;
};

int run_build_graph(const GraphArgs& a) {
    const auto ds = load_dataset(a.data);
    const auto g = build_adjacency(ds.train(), a.epsilon);
    const fs::path out(a.out);
    write_file(out / "adjacency.csv", matrix_csv(g.adjacency));
    write_file(out / "propagation.csv", matrix_csv(g.propagation));
    const nlohmann::json side{{"n_regions", g.n_regions}, {"epsilon", g.epsilon}, {"edge_count", g.edge_count()}};
    write_file(out / "graph.json", side.dump(2) + "\n");
    log("graph: " + std::to_string(g.n_regions) + " regions, " + std::to_string(g.edge_count()) + " edges");
    return 0;
}

struct TrainArgs {
    std::string data, config, out;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const auto cfg = load_config(a.config);
    const auto prepared = prepare(load_dataset(a.data), cfg.epsilon);
    const fs::path out(a.out);
    TrainHooks hooks;
    if (!a.quiet) {
        hooks.epoch_end = [](const EpochRecord& r) {
            std::string line = "epoch " + std::to_string(r.epoch) + " loss " + format_double(r.train_loss);
            if (r.validation_loss) line += " val " + format_double(*r.validation_loss);
            log(line);
        };
    }
    hooks.checkpoint = [&](const ModelParams& p, const TrainResult& r) {
        save_checkpoint(out / ("checkpoint_epoch" + std::to_string(r.history.back().epoch) + ".json"),
                        make_checkpoint(p, prepared, cfg));
    };
    hooks.diverged = [&](const ModelParams& p, const TrainResult&) {
        save_checkpoint(out / "checkpoint_last_good.json", make_checkpoint(p, prepared, cfg));
        log("training diverged; last good parameters saved to " + (out / "checkpoint_last_good.json").string());
    };
    const auto outcome = train_model(prepared, cfg, hooks);
    save_checkpoint(out / "checkpoint.json", outcome.checkpoint);
    write_file(out / "manifest.json", outcome.manifest.dump(2) + "\n");
    log("wrote " + (out / "checkpoint.json").string());
    return 0;
}

struct ForecastArgs {
    std::string checkpoint, data, mode = "free", out;
    std::size_t anchor = 0, tau = 0;
};

int run_forecast(const ForecastArgs& a) {
    const auto model = unpack(load_checkpoint(a.checkpoint));
    const auto ds = load_dataset(a.data);
    const std::size_t tau = a.tau ? a.tau : model.params.hyper.horizon;
    const FeedMode mode = a.mode == "teacher" ? FeedMode::teacher_forced : FeedMode::free_running;
    std::vector<ForecastRow> rows;
    append_forecast(rows, a.anchor, forecast_at(model, ds.demand, ds.config.calendar, a.anchor, tau, mode));
    const std::string csv = forecast_csv(rows);
    if (a.out.empty()) {
        std::cout << csv;
    } else {
        write_file(a.out, csv);
    }
    return 0;
}

struct EvaluateArgs {
    std::string forecast, truth, out;
    double mape_floor = 1.0;
};

int run_evaluate(const EvaluateArgs& a) {
    const auto rows = parse_forecast_csv(read_file(a.forecast), a.forecast);
    if (rows.empty()) throw InputError(a.forecast + ": no forecast rows");
    const auto ds = load_dataset(a.truth);
    std::size_t tau = 0;
    for (const auto& r : rows) tau = std::max(tau, r.horizon_step);
    const std::size_t n = ds.demand.regions(), d = ds.demand.channels();
    std::map<std::size_t, std::size_t> anchors;
    for (const auto& r : rows) anchors.emplace(r.anchor, anchors.size());
    const Shape shape{anchors.size(), tau, n, d};
    Tensor pred(shape), truth(shape);
    std::vector<bool> seen(pred.size(), false);
    for (const auto& r : rows) {
        if (r.region >= n || r.channel >= d) throw InputError(a.forecast + ": region or channel outside the dataset");
        const std::size_t step = r.anchor + r.horizon_step;
        if (step >= ds.demand.steps()) throw InputError(a.forecast + ": forecast step " + std::to_string(step) + " has no truth");
        const std::size_t idx = ((anchors.at(r.anchor) * tau + r.horizon_step - 1) * n + r.region) * d + r.channel;
        seen[idx] = true;
        pred[idx] = r.value;
        truth[idx] = ds.demand.at(step, r.region, r.channel);
    }
    for (bool s : seen)
        if (!s) throw InputError(a.forecast + ": every anchor needs all horizon steps, regions and channels");
    const std::string json = to_json(evaluate(pred, truth, a.mape_floor)).dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << json;
    } else {
        write_file(a.out, json);
    }
    return 0;
}

struct CompareArgs {
    std::string data, config, checkpoint, out;
    bool quiet = false;
};

int run_compare(const CompareArgs& a) {
    const auto cfg = load_config(a.config);
    const auto prepared = prepare(load_dataset(a.data), cfg.epsilon);
    const fs::path out(a.out);
    Checkpoint ck;
    if (!a.checkpoint.empty()) {
        ck = load_checkpoint(a.checkpoint);
    } else {
        TrainHooks hooks;
        if (!a.quiet) hooks.epoch_end = [](const EpochRecord& r) { log("epoch " + std::to_string(r.epoch) + " loss " + format_double(r.train_loss)); };
        auto outcome = train_model(prepared, cfg, hooks);
        ck = std::move(outcome.checkpoint);
        save_checkpoint(out / "checkpoint.json", ck);
        write_file(out / "manifest.json", outcome.manifest.dump(2) + "\n");
    }
    const auto cmp = compare_methods(prepared, unpack(ck), cfg);
    write_file(out / "metrics.json", to_json(cmp).dump(2) + "\n");
    write_file(out / "metrics.csv", [&] {
        std::string s;
        for (const auto& m : cmp.methods) {
            std::string part = to_csv(m.report, m.method);
            s += s.empty() ? part : part.substr(part.find('\n') + 1);
        }
        return s;
    }());
    write_file(out / "plot.csv", plot_csv(cmp));
    std::cout << metric_table(cmp);
    return 0;
}

// ---------------------------------------------------------------------------

int run_self_test() {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
        failures += ok ? 0 : 1;
    };

    {
        const Tensor p = propagation_matrix(Tensor::matrix({{0, 1}, {1, 0}}));
        const double err = max_abs_difference(p, Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}}));
        report("graph.two_regions", err <= 1e-12, "max error " + format_double(err));
        const Tensor iso = propagation_matrix(Tensor::matrix({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}));
        report("graph.isolated_row", iso.at(2, 0) == 0.0 && iso.at(2, 1) == 0.0 && iso.at(2, 2) == 1.0, "row e_3");
    }
    {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-1, 1);
        Tensor x(Shape{3, 4});
        for (double& v : x.data()) v = u(rng);
        const Tensor w = Tensor::matrix({{1, -2}, {0.5, 1}, {2, 0}, {-1, 1}});
        const double err = gradient_check(
            [&](Tape& tape, const Var& v) {
                return add(sum(stg2seq::tanh(matmul(v, tape.constant(w)))), sum(mul(sigmoid(v), v)));
            },
            x);
        report("autodiff.gradient_check", err < 1e-6, "max relative error " + format_double(err));
    }
    {
        Hyper h;
        h.regions = 4;
        h.time_features = 6;
        h.history = 5;
        h.short_window = 3;
        h.patch = 3;
        h.horizon = 2;
        h.hidden = 4;
        const auto params = init_params(h, 11);
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(0, 1);
        Sample s{Tensor(Shape{5, 4, 1}), Tensor(Shape{2, 4, 1}), Tensor(Shape{2, 6}, 0.0), 4};
        for (double& v : s.input.data()) v = u(rng);
        for (double& v : s.targets.data()) v = u(rng);
        s.target_features.at(0, 1) = s.target_features.at(1, 2) = 1.0;
        const Tensor prop = propagation_matrix(Tensor::matrix({{0, 1, 0, 0}, {1, 0, 1, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}}));
        const auto grads = sample_gradient(params, prop, s, FeedMode::teacher_forced).grads;
        double worst = 0;
        std::size_t index = 0;
        for_each_tensor(params, [&](const std::string&, const Tensor& t) {
            for (std::size_t j = 0; j < t.size(); ++j) {
                auto eval = [&](double delta) {
                    auto p = params;
                    std::size_t k = 0;
                    for_each_tensor(p, [&](const std::string&, Tensor& u2) {
                        if (k++ == index) u2[j] += delta;
                    });
                    return sequence_loss(predict(p, prop, s.input, s.target_features, FeedMode::teacher_forced, s.targets),
                                         s.targets);
                };
                worst = std::max(worst, relative_gradient_error(grads[index][j], (eval(1e-5) - eval(-1e-5)) / 2e-5));
            }
            ++index;
        });
        report("model.gradient_check", worst < 1e-3, "worst relative error " + format_double(worst));
    }
    std::cout << (failures ? "self-test FAILED\n" : "self-test passed\n");
    return failures ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-convolutional multi-step demand forecasting"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth-data", "Generate a seeded synthetic dataset directory");
    flag(s, "regions", synth.cfg.regions, "number of regions N");
    flag(s, "steps", synth.cfg.steps, "number of time steps T");
    flag(s, "steps-per-day", synth.cfg.steps_per_day, "time steps per day");
    flag(s, "channels", synth.cfg.channels, "demand channels per region");
    flag(s, "seed", synth.cfg.seed, "random seed");
    flag(s, "out", synth.out, "output directory")->required();

    GraphArgs graph;
    auto* g = app.add_subcommand("build-graph", "Build the region graph from the training split");
    flag(g, "data", graph.data, "dataset directory")->required();
    flag(g, "epsilon", graph.epsilon, "Pearson threshold for an edge");
    flag(g, "out", graph.out, "output directory")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model; writes checkpoint.json and manifest.json");
    flag(t, "data", tr.data, "dataset directory")->required();
    flag(t, "config", tr.config, "experiment config JSON (defaults when omitted)");
    flag(t, "out", tr.out, "output directory")->required();
    t->add_flag("--quiet", tr.quiet, "no per-epoch log")->envname("STG2SEQ_QUIET");

    ForecastArgs fc;
    auto* f = app.add_subcommand("forecast", "Forecast tau steps after an anchor step");
    flag(f, "checkpoint", fc.checkpoint, "checkpoint JSON")->required();
    flag(f, "data", fc.data, "dataset directory")->required();
    flag(f, "anchor", fc.anchor, "last observed step t")->required();
    flag(f, "tau", fc.tau, "forecast steps (default: the trained horizon)");
    flag(f, "mode", fc.mode, "free or teacher")->check(CLI::IsMember({"free", "teacher"}));
    flag(f, "out", fc.out, "output CSV (stdout when omitted)");

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Score a forecast CSV against a dataset");
    flag(e, "forecast", ev.forecast, "forecast CSV")->required();
    flag(e, "truth", ev.truth, "dataset directory")->required();
    flag(e, "mape-floor", ev.mape_floor, "truth values below this are excluded from MAPE");
    flag(e, "out", ev.out, "output JSON (stdout when omitted)");

    CompareArgs cp;
    auto* c = app.add_subcommand("compare", "Evaluate the model, HA and OLR on the test split");
    flag(c, "data", cp.data, "dataset directory")->required();
    flag(c, "config", cp.config, "experiment config JSON");
    flag(c, "checkpoint", cp.checkpoint, "use this checkpoint instead of training");
    flag(c, "out", cp.out, "output directory")->required();
    c->add_flag("--quiet", cp.quiet, "no per-epoch log")->envname("STG2SEQ_QUIET");

    auto* st = app.add_subcommand("self-test", "Gradient checks and analytic graph cases");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? 0 : 1;
    }

    try {
        if (s->parsed()) return run_synth(synth);
        if (g->parsed()) return run_build_graph(graph);
        if (t->parsed()) return run_train(tr);
        if (f->parsed()) return run_forecast(fc);
        if (e->parsed()) return run_evaluate(ev);
        if (c->parsed()) return run_compare(cp);
        if (st->parsed()) return run_self_test();
    } catch (const NumericalError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
