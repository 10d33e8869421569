#pragma once

#include "stochmed/dataset.hpp"
#include "stochmed/random.hpp"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace testing_support {

using stochmed::Dataset;
using stochmed::Matrix;
using stochmed::Vector;

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// One binary covariate W plus the four observed nodes.
inline Dataset make_dataset(const std::vector<int>& a, const std::vector<int>& z, const std::vector<int>& m,
                            const std::vector<double>& y, const std::vector<double>& w) {
    const auto n = static_cast<Eigen::Index>(a.size());
    Dataset d;
    d.a.resize(n);
    d.z.resize(n);
    d.m.resize(n);
    d.y.resize(n);
    d.w.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        d.a[i] = a[k];
        d.z[i] = z[k];
        d.m[i] = m[k];
        d.y[i] = y[k];
        d.w(i, 0) = w[k];
    }
    d.w_names = {"W"};
    return d;
}

// Every (A, Z, M, W) cell appears at least once, then `extra` random rows.
inline Dataset random_small_dataset(std::mt19937_64& rng, int extra, bool binary_y = true) {
    std::vector<int> a, z, m;
    std::vector<double> y, w;
    auto draw_y = [&](double p) { return binary_y ? double(stochmed::bernoulli(rng, p)) : stochmed::uniform01(rng); };
    for (int cell = 0; cell < 16; ++cell) {
        a.push_back(cell & 1);
        z.push_back((cell >> 1) & 1);
        m.push_back((cell >> 2) & 1);
        w.push_back((cell >> 3) & 1);
        y.push_back(draw_y(0.5));
    }
    for (int i = 0; i < extra; ++i) {
        a.push_back(stochmed::bernoulli(rng, 0.5));
        w.push_back(stochmed::bernoulli(rng, 0.5));
        z.push_back(stochmed::bernoulli(rng, 0.2 + 0.5 * a.back()));
        m.push_back(stochmed::bernoulli(rng, 0.2 + 0.6 * z.back()));
        y.push_back(draw_y(0.2 + 0.3 * m.back() + 0.3 * z.back()));
    }
    return make_dataset(a, z, m, y, w);
}

// Golden-section refinement of a dense grid maximum of a 1-d function.
inline double grid_maximize(const std::function<double(double)>& f, double lo, double hi) {
    const int grid = 4000;
    double best = lo, best_val = f(lo);
    for (int i = 1; i <= grid; ++i) {
        const double x = lo + (hi - lo) * i / grid;
        const double v = f(x);
        if (v > best_val) {
            best_val = v;
            best = x;
        }
    }
    double a = best - (hi - lo) / grid, b = best + (hi - lo) / grid;
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
        const double c = b - r * (b - a), d = a + r * (b - a);
        if (f(c) > f(d))
            b = d;
        else
            a = c;
    }
    return 0.5 * (a + b);
}

// Weighted Bernoulli quasi-log-likelihood of an intercept-only model.
inline double intercept_loglik(double beta, const Vector& y, const Vector& w, const Vector& offset) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double eta = beta + offset[i];
        // log expit(eta) and log(1 - expit(eta)) in a stable form
        const double log_p = -std::log1p(std::exp(-eta));
        const double log_q = -std::log1p(std::exp(eta));
        ll += w[i] * (y[i] * log_p + (1.0 - y[i]) * log_q);
    }
    return ll;
}

}  // namespace testing_support
