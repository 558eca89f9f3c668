#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "stg2seq/errors.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

struct StepMetrics {
    std::size_t step = 0;  // 1-based horizon step
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> mape;  // absent when every truth entry is below the floor
    std::size_t mape_excluded = 0;
    std::size_t count = 0;
};

struct MetricReport {
    std::vector<StepMetrics> per_step;
    StepMetrics aggregate;  // step = 0; means over steps (mape over steps where it exists)
    double mape_floor = 1.0;
};

/// Per-step RMSE/MAE/MAPE over de-normalized (tau, N, d) arrays.
///
/// Entries are pooled across every sample passed in; `pred` and `truth` may
/// also be stacked as (samples, tau, N, d).
inline MetricReport evaluate(const Tensor& pred, const Tensor& truth, double mape_floor = 1.0) {
    if (pred.shape() != truth.shape()) {
        throw DimensionError("metrics: prediction " + to_string(pred.shape()) + " vs truth " + to_string(truth.shape()));
    }
    if (pred.rank() != 3 && pred.rank() != 4) throw DimensionError("metrics: expected (tau, N, d) or (S, tau, N, d)");
    if (pred.size() == 0) throw InputError("metrics: nothing to evaluate");
    const bool stacked = pred.rank() == 4;
    const std::size_t samples = stacked ? pred.extent(0) : 1;
    const std::size_t tau = pred.extent(stacked ? 1 : 0);
    const std::size_t frame = pred.size() / (samples * tau);

    MetricReport report;
    report.mape_floor = mape_floor;
    double rmse_sum = 0, mae_sum = 0, mape_sum = 0;
    std::size_t mape_steps = 0;
    for (std::size_t s = 0; s < tau; ++s) {
        StepMetrics m;
        m.step = s + 1;
        double sq = 0, abs = 0, pct = 0;
        std::size_t pct_count = 0;
        for (std::size_t b = 0; b < samples; ++b) {
            const std::size_t base = (b * tau + s) * frame;
            for (std::size_t j = 0; j < frame; ++j) {
                const double y = truth[base + j];
                const double e = pred[base + j] - y;
                sq += e * e;
                abs += std::abs(e);
                if (y >= mape_floor) {
                    pct += std::abs(e) / y;
                    ++pct_count;
                } else {
                    ++m.mape_excluded;
                }
            }
        }
        m.count = samples * frame;
        m.rmse = std::sqrt(sq / static_cast<double>(m.count));
        m.mae = abs / static_cast<double>(m.count);
        if (pct_count > 0) m.mape = pct / static_cast<double>(pct_count);
        rmse_sum += m.rmse;
        mae_sum += m.mae;
        if (m.mape) {
            mape_sum += *m.mape;
            ++mape_steps;
        }
        report.aggregate.mape_excluded += m.mape_excluded;
        report.aggregate.count += m.count;
        report.per_step.push_back(m);
    }
    report.aggregate.rmse = rmse_sum / static_cast<double>(tau);
    report.aggregate.mae = mae_sum / static_cast<double>(tau);
    if (mape_steps > 0) report.aggregate.mape = mape_sum / static_cast<double>(mape_steps);
    return report;
}

inline nlohmann::json to_json(const StepMetrics& m) {
    nlohmann::json j;
    if (m.step) j["step"] = m.step;
    j["rmse"] = m.rmse;
    j["mae"] = m.mae;
    j["mape"] = m.mape ? nlohmann::json(*m.mape) : nlohmann::json(nullptr);
    j["mape_excluded"] = m.mape_excluded;
    j["count"] = m.count;
    return j;
}

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j;
    j["mape_floor"] = r.mape_floor;
    j["per_step"] = nlohmann::json::array();
    for (const auto& m : r.per_step) j["per_step"].push_back(to_json(m));
    j["aggregate"] = to_json(r.aggregate);
    return j;
}

/// CSV table: step,rmse,mae,mape,mape_excluded with an "all" row last. Missing MAPE is empty.
inline std::string to_csv(const MetricReport& r, const std::string& method = "") {
    std::ostringstream os;
    os.precision(17);
    if (!method.empty()) os << "method,";
    os << "step,rmse,mae,mape,mape_excluded\n";
    auto row = [&](const std::string& step, const StepMetrics& m) {
        if (!method.empty()) os << method << ',';
        os << step << ',' << m.rmse << ',' << m.mae << ',';
        if (m.mape) os << *m.mape;
        os << ',' << m.mape_excluded << '\n';
    };
    for (const auto& m : r.per_step) row(std::to_string(m.step), m);
    row("all", r.aggregate);
    return os.str();
}

}  // namespace stg2seq
