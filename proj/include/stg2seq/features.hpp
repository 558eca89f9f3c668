#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stg2seq/errors.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

/// Citywide demand over time, shape (T, N, d_in).
struct DemandSeries {
    Tensor values{Shape{0, 0, 0}};

    std::size_t steps() const { return values.extent(0); }
    std::size_t regions() const { return values.extent(1); }
    std::size_t channels() const { return values.extent(2); }

    double at(std::size_t t, std::size_t r, std::size_t c) const { return values.at(t, r, c); }

    /// The first `count` steps, e.g. the training split.
    DemandSeries head(std::size_t count) const {
        if (count > steps()) {
            throw InputError("head: requested " + std::to_string(count) + " steps of a " +
                             std::to_string(steps()) + "-step series");
        }
        const std::size_t frame = regions() * channels();
        std::vector<double> data(values.values().begin(),
                                 values.values().begin() + static_cast<std::ptrdiff_t>(count * frame));
        return DemandSeries{Tensor(Shape{count, regions(), channels()}, std::move(data))};
    }

    /// Frames [begin, end) as a (end-begin, N, d) tensor.
    Tensor frames(std::size_t begin, std::size_t end) const {
        const std::size_t frame = regions() * channels();
        std::vector<double> data(values.values().begin() + static_cast<std::ptrdiff_t>(begin * frame),
                                 values.values().begin() + static_cast<std::ptrdiff_t>(end * frame));
        return Tensor(Shape{end - begin, regions(), channels()}, std::move(data));
    }
};

/// Step-width calendar. Holidays are half-open step ranges [first, last).
struct Calendar {
    std::size_t steps_per_day = 24;
    std::size_t weekday_of_step0 = 0;
    std::vector<std::pair<std::size_t, std::size_t>> holidays;

    void validate() const {
        if (steps_per_day == 0 || 1440 % steps_per_day != 0) {
            throw ConfigError("steps_per_day must divide a day of 1440 minutes, got " + std::to_string(steps_per_day));
        }
        if (weekday_of_step0 >= 7) {
            throw ConfigError("weekday_of_step0 must be in [0, 7), got " + std::to_string(weekday_of_step0));
        }
        for (const auto& [first, last] : holidays) {
            if (first > last) throw ConfigError("holiday range has start after end");
        }
    }

    /// d_e: time-of-day slots + 7 weekdays + holiday flag.
    std::size_t feature_width() const { return steps_per_day + 7 + 1; }

    std::size_t time_of_day(std::size_t step) const { return step % steps_per_day; }
    std::size_t day_of_week(std::size_t step) const { return (weekday_of_step0 + step / steps_per_day) % 7; }

    bool is_holiday(std::size_t step) const {
        return std::any_of(holidays.begin(), holidays.end(),
                           [step](const auto& r) { return step >= r.first && step < r.second; });
    }
};

/// One-hot time of day, one-hot day of week, then the holiday bit.
inline std::vector<double> encode_time(std::size_t step, const Calendar& calendar) {
    calendar.validate();
    std::vector<double> row(calendar.feature_width(), 0.0);
    row[calendar.time_of_day(step)] = 1.0;
    row[calendar.steps_per_day + calendar.day_of_week(step)] = 1.0;
    if (calendar.is_holiday(step)) row.back() = 1.0;
    return row;
}

/// Calendar features for steps 0..T-1, shape (T, d_e).
struct TimeFeatureSeries {
    Tensor rows{Shape{0, 0}};

    std::size_t width() const { return rows.extent(1); }
    std::size_t steps() const { return rows.extent(0); }

    static TimeFeatureSeries encode(std::size_t steps, const Calendar& calendar) {
        calendar.validate();
        const std::size_t d_e = calendar.feature_width();
        Tensor rows(Shape{steps, d_e}, 0.0);
        for (std::size_t t = 0; t < steps; ++t) {
            const auto row = encode_time(t, calendar);
            std::copy(row.begin(), row.end(), rows.data().begin() + static_cast<std::ptrdiff_t>(t * d_e));
        }
        return TimeFeatureSeries{std::move(rows)};
    }

    Tensor range(std::size_t begin, std::size_t end) const {
        const std::size_t d_e = width();
        std::vector<double> data(rows.values().begin() + static_cast<std::ptrdiff_t>(begin * d_e),
                                 rows.values().begin() + static_cast<std::ptrdiff_t>(end * d_e));
        return Tensor(Shape{end - begin, d_e}, std::move(data));
    }
};

/// Per-channel Min-Max scaling fitted on training demand.
///
/// A channel with max == min maps to 0, and 0 maps back to min.
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(std::vector<double> min, std::vector<double> max) : min_(std::move(min)), max_(std::move(max)) {
        if (min_.size() != max_.size()) throw DimensionError("normalizer min/max channel counts differ");
        for (std::size_t c = 0; c < min_.size(); ++c) {
            if (!(max_[c] >= min_[c])) throw ConfigError("normalizer max < min on channel " + std::to_string(c));
        }
    }

    static Normalizer fit(const DemandSeries& train) {
        if (train.values.size() == 0 || train.steps() == 0 || train.regions() == 0) {
            throw InputError("cannot fit a normalizer on empty training data");
        }
        const std::size_t d = train.channels();
        std::vector<double> lo(d, 0.0), hi(d, 0.0);
        for (std::size_t c = 0; c < d; ++c) lo[c] = hi[c] = train.at(0, 0, c);
        const auto& v = train.values.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::size_t c = i % d;
            lo[c] = std::min(lo[c], v[i]);
            hi[c] = std::max(hi[c], v[i]);
        }
        return Normalizer(std::move(lo), std::move(hi));
    }

    std::size_t channels() const { return min_.size(); }
    const std::vector<double>& min() const { return min_; }
    const std::vector<double>& max() const { return max_; }

    double transform(double x, std::size_t channel) const {
        const double range = max_[channel] - min_[channel];
        return range > 0.0 ? (x - min_[channel]) / range : 0.0;
    }

    double inverse_transform(double x, std::size_t channel) const {
        const double range = max_[channel] - min_[channel];
        return range > 0.0 ? x * range + min_[channel] : min_[channel];
    }

    /// Applies channel-wise scaling to a tensor whose last axis is the channel axis.
    Tensor transform(const Tensor& x) const { return apply(x, false); }
    Tensor inverse_transform(const Tensor& x) const { return apply(x, true); }

    DemandSeries transform(const DemandSeries& s) const { return DemandSeries{transform(s.values)}; }

private:
    Tensor apply(const Tensor& x, bool inverse) const {
        if (x.rank() == 0 || x.shape().back() != channels()) {
            throw DimensionError("normalizer fitted on " + std::to_string(channels()) +
                                 " channels applied to shape " + to_string(x.shape()));
        }
        Tensor out = x;
        const std::size_t d = channels();
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = inverse ? inverse_transform(out[i], i % d) : transform(out[i], i % d);
        return out;
    }

    std::vector<double> min_;
    std::vector<double> max_;
};

/// One supervised example anchored at step t.
struct Sample {
    Tensor input;            // (h, N, d_in), steps t-h+1..t
    Tensor targets;          // (tau, N, d_in), steps t+1..t+tau
    Tensor target_features;  // (tau, d_e)
    std::size_t anchor = 0;  // t
};

/// Every window of the series in chronological order: anchors h-1 .. T-tau-1.
inline std::vector<Sample> make_samples(const DemandSeries& demand, const TimeFeatureSeries& features,
                                        std::size_t history, std::size_t horizon) {
    const std::size_t steps = demand.steps();
    if (history == 0 || horizon == 0) throw ConfigError("history and horizon must be positive");
    if (steps < history + horizon) {
        throw InputError("series has " + std::to_string(steps) + " steps but h + tau = " +
                         std::to_string(history + horizon) + " are needed (short by " +
                         std::to_string(history + horizon - steps) + ")");
    }
    if (features.steps() < steps) throw InputError("time features cover fewer steps than the demand series");
    std::vector<Sample> samples;
    samples.reserve(steps - history - horizon + 1);
    for (std::size_t t = history - 1; t + horizon < steps; ++t) {
        samples.push_back(Sample{demand.frames(t + 1 - history, t + 1), demand.frames(t + 1, t + 1 + horizon),
                                 features.range(t + 1, t + 1 + horizon), t});
    }
    return samples;
}

struct SampleSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Chronological split at `split_step` (the first test step). Training
/// samples have every target before the split; test samples have every
/// target at or after it; samples straddling the boundary are dropped.
inline SampleSplit split_samples(std::vector<Sample> samples, std::size_t split_step) {
    SampleSplit out;
    for (auto& s : samples) {
        const std::size_t last_target = s.anchor + s.targets.extent(0);
        if (last_target < split_step) {
            out.train.push_back(std::move(s));
        } else if (s.anchor + 1 >= split_step) {
            out.test.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace stg2seq
