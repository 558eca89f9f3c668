#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stg2seq/errors.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

// ---------------------------------------------------------------------------
// Historical average
// ---------------------------------------------------------------------------

enum class SlotLevel { time_and_weekday, time_of_day, global };

inline const char* to_string(SlotLevel level) {
    switch (level) {
        case SlotLevel::time_and_weekday: return "time_of_day_and_day_of_week";
        case SlotLevel::time_of_day: return "time_of_day";
        case SlotLevel::global: return "global";
    }
    return "?";
}

/// Per-slot means of the training demand. A slot is (time of day, day of
/// week); empty slots fall back to time of day only, then to the global mean.
class HistoricalAverage {
public:
    static HistoricalAverage fit(const DemandSeries& train, const Calendar& cal) {
        cal.validate();
        if (train.steps() == 0) throw InputError("historical average: empty training data");
        HistoricalAverage ha;
        ha.cal_ = cal;
        ha.frame_ = train.regions() * train.channels();
        ha.regions_ = train.regions();
        ha.channels_ = train.channels();
        const std::size_t slots = cal.steps_per_day * 7;
        ha.slot_sum_.assign(slots * ha.frame_, 0.0);
        ha.slot_n_.assign(slots, 0);
        ha.tod_sum_.assign(cal.steps_per_day * ha.frame_, 0.0);
        ha.tod_n_.assign(cal.steps_per_day, 0);
        ha.global_sum_.assign(ha.frame_, 0.0);
        const auto values = train.values.data();
        for (std::size_t t = 0; t < train.steps(); ++t) {
            const std::size_t tod = cal.time_of_day(t), slot = ha.slot(t);
            for (std::size_t j = 0; j < ha.frame_; ++j) {
                const double v = values[t * ha.frame_ + j];
                ha.slot_sum_[slot * ha.frame_ + j] += v;
                ha.tod_sum_[tod * ha.frame_ + j] += v;
                ha.global_sum_[j] += v;
            }
            ++ha.slot_n_[slot];
            ++ha.tod_n_[tod];
        }
        ha.global_n_ = train.steps();
        return ha;
    }

    /// (N, d) prediction for an absolute step, with the slot level that produced it.
    std::pair<Tensor, SlotLevel> predict(std::size_t step) const {
        Tensor out(Shape{regions_, channels_});
        const std::size_t slot = this->slot(step), tod = cal_.time_of_day(step);
        const double* sum = global_sum_.data();
        std::size_t n = global_n_;
        SlotLevel level = SlotLevel::global;
        if (slot_n_[slot] > 0) {
            sum = &slot_sum_[slot * frame_];
            n = slot_n_[slot];
            level = SlotLevel::time_and_weekday;
        } else if (tod_n_[tod] > 0) {
            sum = &tod_sum_[tod * frame_];
            n = tod_n_[tod];
            level = SlotLevel::time_of_day;
        }
        for (std::size_t j = 0; j < frame_; ++j) out[j] = sum[j] / static_cast<double>(n);
        return {std::move(out), level};
    }

    /// (tau, N, d) forecast for the steps after `anchor`.
    Tensor forecast(std::size_t anchor, std::size_t tau, std::vector<SlotLevel>* levels = nullptr) const {
        Tensor out(Shape{tau, regions_, channels_});
        for (std::size_t s = 0; s < tau; ++s) {
            auto [frame, level] = predict(anchor + 1 + s);
            std::copy(frame.data().begin(), frame.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(s * frame_));
            if (levels) levels->push_back(level);
        }
        return out;
    }

private:
    std::size_t slot(std::size_t step) const { return cal_.day_of_week(step) * cal_.steps_per_day + cal_.time_of_day(step); }

    Calendar cal_;
    std::size_t frame_ = 0, regions_ = 0, channels_ = 0;
    std::vector<double> slot_sum_, tod_sum_, global_sum_;
    std::vector<std::size_t> slot_n_, tod_n_;
    std::size_t global_n_ = 0;
};

// ---------------------------------------------------------------------------
// Ordinary linear regression on each region's own lags
// ---------------------------------------------------------------------------

struct OlrModel {
    std::size_t history = 0;
    std::size_t horizon = 0;
    double ridge = 1e-6;
    Tensor coefficients;  // (tau, N, d, h+1): intercept first, then lags oldest first
};

namespace detail {

/// Solves a x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n) {
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
        if (!(std::abs(a[pivot * n + col]) > 1e-14 * scale)) {
            throw ConfigError("linear regression: normal equations are singular even after ridge damping");
        }
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

}  // namespace detail

/// Least squares per (region, channel, horizon step) on an intercept plus
/// the region's own h lags. The ridge term damps the lag coefficients only.
inline OlrModel fit_olr(const std::vector<Sample>& samples, double ridge = 1e-6) {
    if (samples.empty()) throw ConfigError("linear regression: no training samples");
    if (ridge < 0.0) throw ConfigError("linear regression: ridge must be >= 0");
    const Shape& in = samples.front().input.shape();
    const Shape& out = samples.front().targets.shape();
    const std::size_t h = in[0], n = in[1], d = in[2], tau = out[0];
    const std::size_t p = h + 1;
    OlrModel model{h, tau, ridge, Tensor(Shape{tau, n, d, p})};
    std::vector<double> gram(p * p), rhs(p), x(p);
    for (std::size_t s = 0; s < tau; ++s) {
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                std::fill(gram.begin(), gram.end(), 0.0);
                std::fill(rhs.begin(), rhs.end(), 0.0);
                for (const auto& smp : samples) {
                    if (smp.input.shape() != in || smp.targets.shape() != out) {
                        throw DimensionError("linear regression: samples have inconsistent shapes");
                    }
                    x[0] = 1.0;
                    for (std::size_t i = 0; i < h; ++i) x[i + 1] = smp.input.at(i, r, c);
                    const double y = smp.targets.at(s, r, c);
                    for (std::size_t a = 0; a < p; ++a) {
                        rhs[a] += x[a] * y;
                        for (std::size_t b = 0; b < p; ++b) gram[a * p + b] += x[a] * x[b];
                    }
                }
                for (std::size_t a = 1; a < p; ++a) gram[a * p + a] += ridge;
                const auto w = detail::solve_dense(gram, rhs, p);
                std::copy(w.begin(), w.end(),
                          model.coefficients.data().begin() + static_cast<std::ptrdiff_t>(((s * n + r) * d + c) * p));
            }
        }
    }
    return model;
}

/// (tau, N, d) forecast from an (h, N, d) window.
inline Tensor predict_olr(const OlrModel& model, const Tensor& window) {
    if (window.rank() != 3 || window.extent(0) != model.history || window.extent(1) != model.coefficients.extent(1) ||
        window.extent(2) != model.coefficients.extent(2)) {
        throw DimensionError("linear regression: window " + to_string(window.shape()) + " does not match the model");
    }
    const std::size_t n = window.extent(1), d = window.extent(2), p = model.history + 1;
    Tensor out(Shape{model.horizon, n, d});
    const auto w = model.coefficients.data();
    for (std::size_t s = 0; s < model.horizon; ++s)
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double* coef = &w[((s * n + r) * d + c) * p];
                double y = coef[0];
                for (std::size_t i = 0; i < model.history; ++i) y += coef[i + 1] * window.at(i, r, c);
                out.at(s, r, c) = y;
            }
    return out;
}

}  // namespace stg2seq
