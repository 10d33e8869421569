#pragma once

#include "stochmed/error.hpp"
#include "stochmed/linmod.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stochmed {

// Affine map of a continuous outcome onto [0,1]; inactive for binary Y.
struct OutcomeScale {
    bool active = false;
    double lower = 0.0;
    double upper = 1.0;

    double to_original(double v) const { return active ? lower + v * (upper - lower) : v; }
    double width() const { return active ? upper - lower : 1.0; }
};

/// Column-oriented observed data O = (W, A, Z, M, Y). A, Z and M hold 0/1
/// values; Y lives on [0,1] (rescaled through `outcome_scale` if it was
/// continuous on input).
struct Dataset {
    Vector a;
    Vector z;
    Vector m;
    Vector y;
    Matrix w;
    std::vector<std::string> w_names;
    OutcomeScale outcome_scale;

    Eigen::Index size() const { return a.size(); }

    std::optional<Eigen::Index> covariate_index(const std::string& name) const {
        for (std::size_t j = 0; j < w_names.size(); ++j)
            if (w_names[j] == name) return static_cast<Eigen::Index>(j);
        return std::nullopt;
    }

    Vector indicator_a(int level) const {
        return a.unaryExpr([level](double v) { return v == level ? 1.0 : 0.0; });
    }

    Eigen::Index count_a(int level) const { return static_cast<Eigen::Index>(indicator_a(level).sum()); }

    // Row subset in the given order (duplicates allowed, as in a bootstrap resample).
    Dataset take(std::span<const Eigen::Index> rows) const {
        Dataset out;
        const auto n = static_cast<Eigen::Index>(rows.size());
        out.a.resize(n);
        out.z.resize(n);
        out.m.resize(n);
        out.y.resize(n);
        out.w.resize(n, w.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index r = rows[static_cast<std::size_t>(i)];
            out.a[i] = a[r];
            out.z[i] = z[r];
            out.m[i] = m[r];
            out.y[i] = y[r];
            out.w.row(i) = w.row(r);
        }
        out.w_names = w_names;
        out.outcome_scale = outcome_scale;
        return out;
    }

    void validate() const {
        const Eigen::Index n = size();
        if (n < 1) throw ConfigError("dataset is empty");
        if (z.size() != n || m.size() != n || y.size() != n || w.rows() != n)
            throw ConfigError("dataset columns have different lengths");
        if (static_cast<std::size_t>(w.cols()) != w_names.size())
            throw ConfigError("covariate names do not match covariate matrix");
        auto binary = [](const Vector& v) { return ((v.array() == 0.0) || (v.array() == 1.0)).all(); };
        if (!binary(a) || !binary(z) || !binary(m)) throw ConfigError("A, Z and M must be binary");
        if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) throw ConfigError("Y must lie in [0,1]");
        if (!w.allFinite()) throw ConfigError("non-finite covariate value");
    }
};

// Rows whose selection indicator is 0 are excluded from estimation.
inline Dataset apply_selection(const Dataset& data, const Vector& selected) {
    if (selected.size() != data.size()) throw ConfigError("selection indicator length mismatch");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < selected.size(); ++i)
        if (selected[i] != 0.0) keep.push_back(i);
    return data.take(keep);
}

// Maps a continuous outcome to [0,1] by its observed range. Binary or
// already-bounded 0/1 outcomes are left alone.
inline OutcomeScale bound_outcome(Vector& y) {
    OutcomeScale scale;
    const bool is_binary = ((y.array() == 0.0) || (y.array() == 1.0)).all();
    if (is_binary) return scale;
    scale.lower = y.minCoeff();
    scale.upper = y.maxCoeff();
    if (scale.upper - scale.lower <= 0.0) {
        // constant outcome: keep it if it is already a probability, else shift it to 0
        if (scale.lower >= 0.0 && scale.lower <= 1.0) return OutcomeScale{};
        scale.active = true;
        scale.upper = scale.lower + 1.0;
        y.setConstant(0.0);
        return scale;
    }
    scale.active = true;
    y = ((y.array() - scale.lower) / (scale.upper - scale.lower)).matrix();
    return scale;
}

}  // namespace stochmed
