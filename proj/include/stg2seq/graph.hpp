#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stg2seq/errors.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/tensor.hpp"

namespace stg2seq {

/// Sample Pearson correlation. Returns 0 when either series is constant.
inline double pearson_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InputError("pearson: series lengths differ (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    if (a.size() < 2) throw InputError("pearson: need at least 2 observations");
    const double n = static_cast<double>(a.size());
    double mean_a = 0, mean_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= n;
    mean_b /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a, db = b[i] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Demand-similarity graph over regions.
///
/// `adjacency` is binary, symmetric, zero-diagonal. `propagation` is
/// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
struct RegionGraph {
    std::size_t n_regions = 0;
    double epsilon = 0.1;
    Tensor adjacency{Shape{0, 0}};
    Tensor propagation{Shape{0, 0}};

    std::size_t edge_count() const {
        std::size_t e = 0;
        for (std::size_t i = 0; i < n_regions; ++i)
            for (std::size_t j = i + 1; j < n_regions; ++j) e += adjacency.at(i, j) != 0.0;
        return e;
    }
};

inline Tensor propagation_matrix(const Tensor& adjacency) {
    if (adjacency.rank() != 2 || adjacency.extent(0) != adjacency.extent(1)) {
        throw DimensionError("adjacency must be square, got " + to_string(adjacency.shape()));
    }
    const std::size_t n = adjacency.extent(0);
    std::vector<double> degree(n, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) degree[i] += adjacency.at(i, j);
    Tensor p(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = i == j ? 1.0 : adjacency.at(i, j);
            p.at(i, j) = a / std::sqrt(degree[i] * degree[j]);
        }
    return p;
}

/// Wraps a precomputed adjacency, computing and caching the propagation matrix.
inline RegionGraph make_region_graph(Tensor adjacency, double epsilon) {
    RegionGraph g;
    g.n_regions = adjacency.extent(0);
    g.epsilon = epsilon;
    g.propagation = propagation_matrix(adjacency);
    g.adjacency = std::move(adjacency);
    return g;
}

/// Per-region sequence used for similarity: all channels of each step, in step order.
inline std::vector<double> region_sequence(const DemandSeries& demand, std::size_t region) {
    std::vector<double> seq;
    seq.reserve(demand.steps() * demand.channels());
    for (std::size_t t = 0; t < demand.steps(); ++t)
        for (std::size_t c = 0; c < demand.channels(); ++c) seq.push_back(demand.at(t, region, c));
    return seq;
}

/// Connects regions whose training-demand correlation exceeds epsilon.
/// Pass only the training split.
inline RegionGraph build_adjacency(const DemandSeries& train_demand, double epsilon) {
    if (!(epsilon >= -1.0 && epsilon < 1.0)) {
        throw ConfigError("epsilon must lie in [-1, 1), got " + std::to_string(epsilon));
    }
    const std::size_t n = train_demand.regions();
    if (n < 2) throw InputError("graph construction needs at least 2 regions, got " + std::to_string(n));
    std::vector<std::vector<double>> seqs;
    seqs.reserve(n);
    for (std::size_t r = 0; r < n; ++r) seqs.push_back(region_sequence(train_demand, r));
    Tensor adjacency(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (pearson_similarity(seqs[i], seqs[j]) > epsilon) adjacency.at(i, j) = adjacency.at(j, i) = 1.0;
        }
    return make_region_graph(std::move(adjacency), epsilon);
}

}  // namespace stg2seq
