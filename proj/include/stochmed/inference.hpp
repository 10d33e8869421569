#pragma once

// Standard errors from the efficient influence curve (data-dependent
// parameters) or from the nonparametric bootstrap (fixed parameters).

#include "stochmed/dataset.hpp"
#include "stochmed/engine.hpp"
#include "stochmed/error.hpp"
#include "stochmed/parallel.hpp"
#include "stochmed/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stochmed {

enum class VarianceMethod { ic, bootstrap };

inline std::string to_string(VarianceMethod v) { return v == VarianceMethod::ic ? "ic" : "bootstrap"; }

inline VarianceMethod parse_variance(std::string_view s) {
    if (s == "ic") return VarianceMethod::ic;
    if (s == "bootstrap") return VarianceMethod::bootstrap;
    throw ConfigError("unknown variance method '" + std::string(s) + "'");
}

inline constexpr double kNormalQuantile975 = 1.96;

struct EicVector {
    Vector d0, d1, d2;

    Vector total() const { return d0 + d1 + d2; }
    Eigen::Index size() const { return d0.size(); }
};

struct VarianceReport {
    VarianceMethod method = VarianceMethod::ic;
    double se = 0.0;
    int replicates = 0;
    int failures = 0;
    // 2.5% and 97.5% quantiles of the bootstrap replicates.
    std::optional<std::pair<double, double>> percentile;
};

inline EicVector compute_eic(const PsiFit& fit, const Dataset& data) {
    PsiFit copy = fit;
    fill_eic(copy, data);
    return EicVector{std::move(copy.d0), std::move(copy.d1), std::move(copy.d2)};
}

inline double sample_variance(const Vector& x) {
    const Eigen::Index n = x.size();
    if (n < 2) throw EstimationError("sample variance needs at least two observations");
    // shifted by the first value so that a constant sample has exactly zero variance
    const Eigen::ArrayXd shifted = x.array() - x[0];
    const double mean = shifted.mean();
    return (shifted - mean).square().sum() / static_cast<double>(n - 1);
}

/// SE of the contrast whose influence curve is eic_a - eic_b.
inline VarianceReport ic_variance(const EicVector& eic_a, const EicVector& eic_b) {
    if (eic_a.size() != eic_b.size()) throw std::invalid_argument("ic_variance: length mismatch");
    const Vector diff = eic_a.total() - eic_b.total();
    const auto n = static_cast<double>(diff.size());
    return VarianceReport{VarianceMethod::ic, std::sqrt(sample_variance(diff) / n), 0, 0, std::nullopt};
}

inline VarianceReport ic_variance(const EicVector& eic) {
    const Vector total = eic.total();
    const auto n = static_cast<double>(total.size());
    return VarianceReport{VarianceMethod::ic, std::sqrt(sample_variance(total) / n), 0, 0, std::nullopt};
}

// Linear-interpolated quantile (R type 7) of sorted values.
inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BootstrapDraws {
    // replicate-major: values[b] holds every statistic of replicate b
    std::vector<std::vector<double>> values;
    int requested = 0;
    int failures = 0;
};

// Row indices of resample `replicate`: n draws with replacement from the
// stream keyed by (seed, replicate).
inline std::vector<Eigen::Index> bootstrap_indices(Eigen::Index n, std::uint64_t seed, std::uint64_t replicate) {
    auto rng = make_stream(seed, {0xb007u, replicate});
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (auto& r : rows)
        r = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n)));
    return rows;
}

/// Runs `statistic` on B resamples of n rows. The statistic returns every
/// quantity of interest for one resample, or std::nullopt (or throws
/// EstimationError) when the replicate fails; failed replicates are counted
/// and excluded. Output is identical for any worker count.
template <typename Statistic>
BootstrapDraws bootstrap(Eigen::Index n, int replicates, std::uint64_t seed, Statistic&& statistic) {
    if (replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
    std::vector<std::optional<std::vector<double>>> slots(static_cast<std::size_t>(replicates));
    parallel_for(slots.size(), [&](std::size_t b) {
        const auto rows = bootstrap_indices(n, seed, b);
        try {
            slots[b] = statistic(std::span<const Eigen::Index>(rows));
        } catch (const EstimationError&) {
            slots[b].reset();
        }
    });
    BootstrapDraws draws;
    draws.requested = replicates;
    for (auto& s : slots) {
        if (s)
            draws.values.push_back(std::move(*s));
        else
            ++draws.failures;
    }
    return draws;
}

inline constexpr double kMaxBootstrapFailureFraction = 0.10;

/// SE (sample standard deviation over successful replicates) of statistic k.
inline VarianceReport bootstrap_report(const BootstrapDraws& draws, std::size_t k) {
    if (draws.failures > kMaxBootstrapFailureFraction * draws.requested)
        throw EstimationError("bootstrap unstable: " + std::to_string(draws.failures) + " of " +
                              std::to_string(draws.requested) + " replicates failed");
    if (draws.values.size() < 2) throw EstimationError("bootstrap unstable: fewer than two usable replicates");
    std::vector<double> column;
    column.reserve(draws.values.size());
    for (const auto& v : draws.values) column.push_back(v.at(k));
    const Vector x = Eigen::Map<const Vector>(column.data(), static_cast<Eigen::Index>(column.size()));
    VarianceReport r;
    r.method = VarianceMethod::bootstrap;
    r.se = std::sqrt(sample_variance(x));
    r.replicates = static_cast<int>(column.size());
    r.failures = draws.failures;
    std::sort(column.begin(), column.end());
    r.percentile = std::make_pair(quantile_sorted(column, 0.025), quantile_sorted(column, 0.975));
    return r;
}

}  // namespace stochmed
