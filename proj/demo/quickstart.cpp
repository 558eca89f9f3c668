// Train a small model on synthetic demand and print the test-split table.
//
//   quickstart [epochs]

#include <cstdio>
#include <string>

#include "stg2seq/stg2seq.hpp"

using namespace stg2seq;

int main(int argc, char** argv) {
    SynthConfig sc;
    sc.regions = 8;
    sc.steps = 720;
    const SynthData synth = synthesize(sc);
    Dataset ds{synth.demand, synth.config, hex64(fnv1a(demand_csv(synth.demand)))};

    ExperimentConfig cfg;
    cfg.model.hidden = 8;
    cfg.training.learning_rate = 1e-2;
    cfg.training.batch_size = 8;
    cfg.training.max_epochs = argc > 1 ? std::stoul(argv[1]) : 5;

    const Prepared p = prepare(std::move(ds), cfg.epsilon);
    std::printf("%zu regions, %zu edges at epsilon %.2f\n", p.graph.n_regions, p.graph.edge_count(), cfg.epsilon);

    TrainHooks hooks;
    hooks.epoch_end = [](const EpochRecord& r) { std::printf("epoch %zu loss %.5f\n", r.epoch, r.train_loss); };
    const auto trained = train_model(p, cfg, hooks);
    const LoadedModel model = unpack(trained.checkpoint);

    const std::size_t anchor = p.data.config.train_end_step + 20;
    const Tensor next = forecast_at(model, p.data.demand, p.data.config.calendar, anchor, 3, FeedMode::free_running);
    std::printf("region 0 after step %zu: %.1f %.1f %.1f (actual %.0f %.0f %.0f)\n", anchor, next.at(0, 0, 0),
                next.at(1, 0, 0), next.at(2, 0, 0), p.data.demand.at(anchor + 1, 0, 0), p.data.demand.at(anchor + 2, 0, 0),
                p.data.demand.at(anchor + 3, 0, 0));

    std::printf("%s", metric_table(compare_methods(p, model, cfg)).c_str());
}
