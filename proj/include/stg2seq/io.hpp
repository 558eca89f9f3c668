#pragma once

// File formats.
//
//   demand.csv    step,region,channel,value     dense: every (step, region, channel) exactly once
//   dataset.json  {steps_per_day, weekday_of_step0, holidays: [[first, last), ...], train_end_step}
//   forecast CSV  anchor,horizon_step,region,channel,value   (horizon_step is 1-based)

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "stg2seq/errors.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
    if (!out) throw InputError("write failed for " + path.string());
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

inline std::size_t parse_index(std::string_view field, const std::string& where) {
    std::size_t v = 0;
    field = trim(field);
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw InputError(where + ": expected a non-negative integer, got '" + std::string(field) + "'");
    }
    return v;
}

inline double parse_value(std::string_view field, const std::string& where) {
    double v = 0;
    field = trim(field);
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw InputError(where + ": expected a number, got '" + std::string(field) + "'");
    }
    if (!std::isfinite(v)) throw InputError(where + ": value is not finite");
    return v;
}

template <class F>
void for_each_row(const std::string& text, const std::string& name, const std::vector<std::string>& header, F&& f) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view l = trim(line);
        if (l.empty()) continue;
        const auto fields = split_csv(l);
        const std::string where = name + ":" + std::to_string(lineno);
        if (!seen_header) {
            seen_header = true;
            bool ok = fields.size() == header.size();
            for (std::size_t i = 0; ok && i < header.size(); ++i) ok = trim(fields[i]) == header[i];
            if (!ok) {
                std::string expected;
                for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
                throw InputError(where + ": header must be '" + expected + "'");
            }
            continue;
        }
        if (fields.size() != header.size()) {
            throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        f(fields, where);
    }
    if (!seen_header) throw InputError(name + ": file is empty");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Demand
// ---------------------------------------------------------------------------

inline DemandSeries parse_demand_csv(const std::string& text, const std::string& name = "demand.csv") {
    struct Row {
        std::size_t t, r, c;
        double v;
    };
    std::vector<Row> rows;
    std::size_t steps = 0, regions = 0, channels = 0;
    detail::for_each_row(text, name, {"step", "region", "channel", "value"}, [&](const auto& f, const std::string& where) {
        Row row{detail::parse_index(f[0], where), detail::parse_index(f[1], where), detail::parse_index(f[2], where),
                detail::parse_value(f[3], where)};
        steps = std::max(steps, row.t + 1);
        regions = std::max(regions, row.r + 1);
        channels = std::max(channels, row.c + 1);
        rows.push_back(row);
    });
    if (rows.empty()) throw InputError(name + ": no data rows");
    const std::size_t total = steps * regions * channels;
    Tensor values(Shape{steps, regions, channels});
    std::vector<bool> seen(total, false);
    for (const auto& row : rows) {
        const std::size_t idx = (row.t * regions + row.r) * channels + row.c;
        if (seen[idx]) {
            throw InputError(name + ": duplicate entry for step " + std::to_string(row.t) + " region " +
                             std::to_string(row.r) + " channel " + std::to_string(row.c));
        }
        seen[idx] = true;
        values[idx] = row.v;
    }
    if (rows.size() != total) {
        for (std::size_t i = 0; i < total; ++i) {
            if (!seen[i]) {
                throw InputError(name + ": missing entry for step " + std::to_string(i / (regions * channels)) +
                                 " region " + std::to_string(i / channels % regions) + " channel " +
                                 std::to_string(i % channels) + " (the series must be dense)");
            }
        }
    }
    return DemandSeries{std::move(values)};
}

inline std::string demand_csv(const DemandSeries& d) {
    std::string out = "step,region,channel,value\n";
    for (std::size_t t = 0; t < d.steps(); ++t)
        for (std::size_t r = 0; r < d.regions(); ++r)
            for (std::size_t c = 0; c < d.channels(); ++c) {
                out += std::to_string(t) + ',' + std::to_string(r) + ',' + std::to_string(c) + ',' +
                       format_double(d.at(t, r, c)) + '\n';
            }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset config and directory
// ---------------------------------------------------------------------------

struct DatasetConfig {
    Calendar calendar;
    std::size_t train_end_step = 0;  // training split is steps [0, train_end_step)
};

inline nlohmann::json to_json(const DatasetConfig& c) {
    nlohmann::json j;
    j["steps_per_day"] = c.calendar.steps_per_day;
    j["weekday_of_step0"] = c.calendar.weekday_of_step0;
    j["holidays"] = nlohmann::json::array();
    for (const auto& [a, b] : c.calendar.holidays) j["holidays"].push_back({a, b});
    j["train_end_step"] = c.train_end_step;
    return j;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j, const std::string& name = "dataset.json") {
    DatasetConfig c;
    try {
        c.calendar.steps_per_day = j.at("steps_per_day").get<std::size_t>();
        c.calendar.weekday_of_step0 = j.value("weekday_of_step0", std::size_t{0});
        if (j.contains("holidays")) {
            for (const auto& h : j.at("holidays")) {
                if (!h.is_array() || h.size() != 2) throw InputError(name + ": holidays must be [first, last) pairs");
                c.calendar.holidays.emplace_back(h[0].get<std::size_t>(), h[1].get<std::size_t>());
            }
        }
        c.train_end_step = j.at("train_end_step").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(name + ": " + e.what());
    }
    c.calendar.validate();
    return c;
}

struct Dataset {
    DemandSeries demand;
    DatasetConfig config;
    std::string demand_hash;  // FNV-1a of the demand CSV bytes

    DemandSeries train() const { return demand.head(config.train_end_step); }
};

inline nlohmann::json parse_json(const std::string& text, const std::string& name) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(name + ": " + e.what());
    }
}

/// Loads `dir/demand.csv` and `dir/dataset.json`.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
    const std::string csv = read_file(dir / "demand.csv");
    Dataset ds;
    ds.demand = parse_demand_csv(csv, (dir / "demand.csv").string());
    ds.config = dataset_config_from_json(parse_json(read_file(dir / "dataset.json"), (dir / "dataset.json").string()));
    ds.demand_hash = hex64(fnv1a(csv));
    if (ds.config.train_end_step == 0 || ds.config.train_end_step > ds.demand.steps()) {
        throw InputError("dataset.json: train_end_step must lie in [1, " + std::to_string(ds.demand.steps()) + "]");
    }
    return ds;
}

inline void save_dataset(const std::filesystem::path& dir, const DemandSeries& demand, const DatasetConfig& config) {
    write_file(dir / "demand.csv", demand_csv(demand));
    write_file(dir / "dataset.json", to_json(config).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Matrices and forecasts
// ---------------------------------------------------------------------------

inline std::string matrix_csv(const Tensor& m) {
    if (m.rank() != 2) throw DimensionError("matrix_csv: expected a matrix");
    std::string out;
    for (std::size_t i = 0; i < m.extent(0); ++i) {
        for (std::size_t j = 0; j < m.extent(1); ++j) out += (j ? "," : "") + format_double(m.at(i, j));
        out += '\n';
    }
    return out;
}

struct ForecastRow {
    std::size_t anchor = 0;
    std::size_t horizon_step = 0;  // 1-based
    std::size_t region = 0;
    std::size_t channel = 0;
    double value = 0.0;
};

/// Appends rows for a (tau, N, d) forecast.
inline void append_forecast(std::vector<ForecastRow>& rows, std::size_t anchor, const Tensor& pred) {
    for (std::size_t s = 0; s < pred.extent(0); ++s)
        for (std::size_t r = 0; r < pred.extent(1); ++r)
            for (std::size_t c = 0; c < pred.extent(2); ++c) rows.push_back({anchor, s + 1, r, c, pred.at(s, r, c)});
}

inline std::string forecast_csv(const std::vector<ForecastRow>& rows) {
    std::string out = "anchor,horizon_step,region,channel,value\n";
    for (const auto& r : rows) {
        out += std::to_string(r.anchor) + ',' + std::to_string(r.horizon_step) + ',' + std::to_string(r.region) + ',' +
               std::to_string(r.channel) + ',' + format_double(r.value) + '\n';
    }
    return out;
}

inline std::vector<ForecastRow> parse_forecast_csv(const std::string& text, const std::string& name = "forecast.csv") {
    std::vector<ForecastRow> rows;
    detail::for_each_row(text, name, {"anchor", "horizon_step", "region", "channel", "value"},
                         [&](const auto& f, const std::string& where) {
                             ForecastRow r{detail::parse_index(f[0], where), detail::parse_index(f[1], where),
                                           detail::parse_index(f[2], where), detail::parse_index(f[3], where),
                                           detail::parse_value(f[4], where)};
                             if (r.horizon_step == 0) throw InputError(where + ": horizon_step is 1-based");
                             rows.push_back(r);
                         });
    return rows;
}

}  // namespace stg2seq
