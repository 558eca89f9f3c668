#pragma once

// Seeded synthetic demand for desk-scale experiments.
//
// Regions belong to correlation groups (region r is in group r % groups).
// Each group has its own daily profile (one of cos/sin at one and two cycles
// per day, so profiles of different groups are orthogonal over a day), its
// own weekly amplitude modulation, and a slowly varying AR(1) level shared
// by its members. Counts are Poisson around the resulting rate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "stg2seq/errors.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/io.hpp"

namespace stg2seq {

struct SynthConfig {
    std::size_t regions = 20;
    std::size_t steps = 2000;
    std::size_t steps_per_day = 24;
    std::size_t channels = 1;
    std::size_t groups = 4;
    std::uint64_t seed = 7;
    double train_fraction = 0.8;
    double level_memory = 0.95;  // AR(1) coefficient of the shared group level
};

struct SynthData {
    DemandSeries demand;
    DatasetConfig config;
    std::vector<std::size_t> group_of;  // group index per region
};

inline SynthData synthesize(const SynthConfig& cfg) {
    if (cfg.regions < 2) throw ConfigError("synth: need at least 2 regions");
    if (cfg.steps_per_day == 0 || 1440 % cfg.steps_per_day != 0) {
        throw ConfigError("synth: steps_per_day must divide 1440");
    }
    if (cfg.steps < 2 * cfg.steps_per_day) throw ConfigError("synth: need at least two days of steps");
    if (cfg.channels < 1) throw ConfigError("synth: channels must be >= 1");
    if (cfg.groups < 1 || cfg.groups > 4) throw ConfigError("synth: groups must lie in [1, 4]");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw ConfigError("synth: train_fraction must lie in (0, 1)");
    if (!(cfg.level_memory >= 0.0 && cfg.level_memory < 1.0)) throw ConfigError("synth: level_memory must lie in [0, 1)");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<double> weekly_phase(cfg.groups);
    for (auto& p : weekly_phase) p = unit(rng) * 7.0;
    struct Region {
        double base, amplitude, level_gain;
    };
    std::vector<Region> regions(cfg.regions);
    std::vector<std::vector<double>> channel_scale(cfg.regions, std::vector<double>(cfg.channels, 1.0));
    for (std::size_t r = 0; r < cfg.regions; ++r) {
        const double base = 30.0 + 50.0 * unit(rng);
        regions[r] = {base, base * (0.6 + 0.2 * unit(rng)), base * (0.2 + 0.1 * unit(rng))};
        for (std::size_t c = 1; c < cfg.channels; ++c) channel_scale[r][c] = 0.6 + 0.3 * unit(rng);
    }

    const double innovation = std::sqrt(1.0 - cfg.level_memory * cfg.level_memory);
    std::vector<double> level(cfg.groups, 0.0);
    for (auto& l : level) l = gauss(rng);

    SynthData out;
    out.group_of.resize(cfg.regions);
    for (std::size_t r = 0; r < cfg.regions; ++r) out.group_of[r] = r % cfg.groups;
    out.config.calendar.steps_per_day = cfg.steps_per_day;
    out.config.calendar.weekday_of_step0 = 0;
    out.config.train_end_step = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(cfg.steps)));

    Tensor values(Shape{cfg.steps, cfg.regions, cfg.channels});
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        const double phase = static_cast<double>(t % cfg.steps_per_day) / static_cast<double>(cfg.steps_per_day);
        const double day = static_cast<double>(out.config.calendar.day_of_week(t));
        for (std::size_t g = 0; g < cfg.groups; ++g) level[g] = cfg.level_memory * level[g] + innovation * gauss(rng);
        for (std::size_t r = 0; r < cfg.regions; ++r) {
            const std::size_t g = out.group_of[r];
            const double harmonic = g < 2 ? 1.0 : 2.0;
            const double profile = g % 2 == 0 ? std::cos(two_pi * harmonic * phase) : std::sin(two_pi * harmonic * phase);
            const double weekly = 1.0 + 0.3 * std::cos(two_pi * (day + weekly_phase[g]) / 7.0);
            const auto& reg = regions[r];
            const double rate = reg.base + reg.amplitude * weekly * profile + reg.level_gain * level[g];
            for (std::size_t c = 0; c < cfg.channels; ++c) {
                std::poisson_distribution<long> counts(std::max(0.1, rate * channel_scale[r][c]));
                values.at(t, r, c) = static_cast<double>(counts(rng));
            }
        }
    }
    out.demand = DemandSeries{std::move(values)};
    return out;
}

}  // namespace stg2seq
