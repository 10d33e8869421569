#pragma once

// Weighted logistic regression by iteratively reweighted least squares.
//
// Outcomes may be fractional (any value in [0,1]); the fit then maximizes the
// Bernoulli quasi-likelihood. Every nuisance regression and every fluctuation
// in the estimators goes through fit_logistic().

#include "stochmed/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace stochmed {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kLinearPredictorCap = 30.0;

inline double expit(double x) {
    if (!std::isfinite(x)) throw std::domain_error("expit: non-finite input");
    const double p = 1.0 / (1.0 + std::exp(-x));
    return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

inline double logit(double p) {
    p = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
    return std::log(p / (1.0 - p));
}

inline Vector expit(const Vector& x) { return x.unaryExpr([](double v) { return expit(v); }); }
inline Vector logit(const Vector& p) { return p.unaryExpr([](double v) { return logit(v); }); }

inline Vector clamp_probabilities(const Vector& p, double lower) {
    return p.unaryExpr([lower](double v) { return std::clamp(v, lower, 1.0 - lower); });
}

/// Real-valued n x p design; the first column is usually an all-ones intercept.
class DesignMatrix {
public:
    DesignMatrix() = default;

    explicit DesignMatrix(Matrix values) : values_(std::move(values)) {
        if (values_.rows() < 1 || values_.cols() < 1)
            throw std::invalid_argument("DesignMatrix: need at least one row and one column");
        if (!values_.allFinite()) throw std::invalid_argument("DesignMatrix: non-finite entry");
    }

    static DesignMatrix intercept_only(Eigen::Index n) { return DesignMatrix(Matrix::Ones(n, 1)); }

    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }
    const Matrix& values() const { return values_; }

private:
    Matrix values_;
};

struct GlmFit {
    Vector coefficients;
    bool converged = false;
    // True when some positively weighted row hit the linear-predictor cap.
    bool capped = false;
    int iterations = 0;
    double deviance = 0.0;
    // Largest absolute component of the weighted score at the returned coefficients.
    double max_score = 0.0;
};

struct IrlsOptions {
    int max_iterations = 100;
    int max_halvings = 10;
    double score_tolerance = 1e-10;
    double ridge = 1e-10;
};

namespace detail {

inline double bernoulli_deviance(const Vector& y, const Vector& w, const Vector& mu) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (w[i] == 0.0) continue;
        const double m = std::clamp(mu[i], kProbabilityFloor, 1.0 - kProbabilityFloor);
        double term = 0.0;
        if (y[i] == 1.0)
            term = -std::log(m);
        else if (y[i] == 0.0)
            term = -std::log1p(-m);
        else
            term = y[i] * std::log(y[i] / m) + (1.0 - y[i]) * std::log((1.0 - y[i]) / (1.0 - m));
        dev += 2.0 * w[i] * term;
    }
    return dev;
}

struct IrlsState {
    Vector eta;        // capped linear predictor
    Vector mu;
    Vector active;     // 1 where the row contributes derivatives, 0 where capped
    bool capped = false;
};

inline IrlsState evaluate(const Matrix& x, const Vector& beta, const Vector& offset, const Vector& w) {
    IrlsState s;
    s.eta = x * beta + offset;
    s.mu.resize(s.eta.size());
    s.active = Vector::Ones(s.eta.size());
    for (Eigen::Index i = 0; i < s.eta.size(); ++i) {
        if (std::abs(s.eta[i]) > kLinearPredictorCap) {
            s.eta[i] = std::copysign(kLinearPredictorCap, s.eta[i]);
            s.active[i] = 0.0;
            if (w[i] > 0.0) s.capped = true;
        }
        s.mu[i] = 1.0 / (1.0 + std::exp(-s.eta[i]));
    }
    return s;
}

}  // namespace detail

namespace detail {

inline GlmFit irls(const Matrix& x, const Vector& y, const Vector& weights, const Vector& offset,
                   double weight_total, const IrlsOptions& opts);

}  // namespace detail

inline GlmFit fit_logistic(const DesignMatrix& design, const Vector& y, const Vector& weights,
                           const Vector& offset, const IrlsOptions& opts = {}) {
    const Matrix& x = design.values();
    const Eigen::Index n = x.rows();
    if (y.size() != n || weights.size() != n || offset.size() != n)
        throw std::invalid_argument("fit_logistic: dimension mismatch");
    if ((weights.array() < 0.0).any() || !weights.allFinite())
        throw std::invalid_argument("fit_logistic: weights must be finite and nonnegative");
    const double weight_total = weights.sum();
    if (weight_total <= 0.0) throw std::invalid_argument("fit_logistic: all weights are zero");
    if ((y.array() < 0.0).any() || (y.array() > 1.0).any())
        throw std::invalid_argument("fit_logistic: outcome outside [0,1]");
    if (!offset.allFinite()) throw std::invalid_argument("fit_logistic: non-finite offset");

    // zero-weight rows do not enter the likelihood; drop them up front
    const Eigen::Index active = (weights.array() > 0.0).count();
    if (active == n) return detail::irls(x, y, weights, offset, weight_total, opts);
    Matrix xs(active, x.cols());
    Vector ys(active), ws(active), os(active);
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
        if (weights[i] <= 0.0) continue;
        xs.row(k) = x.row(i);
        ys[k] = y[i];
        ws[k] = weights[i];
        os[k] = offset[i];
        ++k;
    }
    return detail::irls(xs, ys, ws, os, weight_total, opts);
}

inline GlmFit detail::irls(const Matrix& x, const Vector& y, const Vector& weights, const Vector& offset,
                           double weight_total, const IrlsOptions& opts) {
    const Eigen::Index p = x.cols();
    GlmFit fit;
    fit.coefficients = Vector::Zero(p);
    auto state = detail::evaluate(x, fit.coefficients, offset, weights);
    double deviance = detail::bernoulli_deviance(y, weights, state.mu);

    auto score_of = [&](const detail::IrlsState& s) -> Vector {
        Vector r = (weights.array() * s.active.array() * (y - s.mu).array()).matrix();
        return x.transpose() * r;
    };

    Vector score = score_of(state);
    const double relaxed_score = opts.score_tolerance * std::max(1.0, weight_total);

    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        fit.iterations = iter;
        Vector var = (weights.array() * state.active.array() * state.mu.array() *
                      (1.0 - state.mu.array()))
                         .matrix();
        Matrix info = x.transpose() * (x.array().colwise() * var.array()).matrix();
        info.diagonal().array() += opts.ridge;
        Vector step = info.ldlt().solve(score);
        if (!step.allFinite()) break;

        Vector candidate = fit.coefficients + step;
        auto next = detail::evaluate(x, candidate, offset, weights);
        double next_dev = detail::bernoulli_deviance(y, weights, next.mu);
        for (int h = 0; h < opts.max_halvings && !(next_dev <= deviance * (1.0 + 1e-12) + 1e-12); ++h) {
            step *= 0.5;
            candidate = fit.coefficients + step;
            next = detail::evaluate(x, candidate, offset, weights);
            next_dev = detail::bernoulli_deviance(y, weights, next.mu);
        }

        const double change = std::abs(next_dev - deviance) / (std::abs(next_dev) + 0.1);
        fit.coefficients = candidate;
        state = std::move(next);
        deviance = next_dev;
        score = score_of(state);
        const double max_score = score.cwiseAbs().maxCoeff();
        if (max_score < opts.score_tolerance) {
            fit.converged = true;
            break;
        }
        // stalled in floating point: accept a score small relative to the total weight
        if (change == 0.0 && max_score <= relaxed_score) {
            fit.converged = true;
            break;
        }
    }

    fit.deviance = deviance;
    fit.max_score = score.cwiseAbs().maxCoeff();
    fit.capped = state.capped;
    if (fit.capped) fit.converged = false;
    if (!fit.coefficients.allFinite()) throw EstimationError("fit_logistic: non-finite coefficients");
    return fit;
}

inline GlmFit fit_logistic(const DesignMatrix& design, const Vector& y) {
    return fit_logistic(design, y, Vector::Ones(y.size()), Vector::Zero(y.size()));
}

inline Vector predict_proba(const GlmFit& fit, const DesignMatrix& design, const Vector& offset) {
    if (design.cols() != fit.coefficients.size())
        throw std::invalid_argument("predict_proba: column count does not match the fit");
    if (offset.size() != design.rows()) throw std::invalid_argument("predict_proba: offset length mismatch");
    Vector eta = design.values() * fit.coefficients + offset;
    return eta.unaryExpr([](double v) {
        return expit(std::clamp(v, -kLinearPredictorCap, kLinearPredictorCap));
    });
}

inline Vector predict_proba(const GlmFit& fit, const DesignMatrix& design) {
    return predict_proba(fit, design, Vector::Zero(design.rows()));
}

}  // namespace stochmed
