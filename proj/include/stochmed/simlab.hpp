#pragma once

// Simulation laboratory: the binary-variable data-generating mechanism with
// sample selection, exact-enumeration truths, and estimator comparison
// studies reporting bias, %bias, SE*sqrt(n), CI coverage and MSE.

#include "stochmed/config.hpp"
#include "stochmed/dataset.hpp"
#include "stochmed/effects.hpp"
#include "stochmed/error.hpp"
#include "stochmed/intervention.hpp"
#include "stochmed/parallel.hpp"
#include "stochmed/random.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace stochmed {

enum class Arm { correct, missy, missm };
enum class Flavor { fixed, data_dependent };

inline std::string to_string(Arm a) {
    switch (a) {
        case Arm::correct: return "correct";
        case Arm::missy: return "missy";
        case Arm::missm: return "missm";
    }
    return "?";
}

inline Arm parse_arm(std::string_view s) {
    if (s == "correct") return Arm::correct;
    if (s == "missy") return Arm::missy;
    if (s == "missm") return Arm::missm;
    throw ConfigError("unknown arm '" + std::string(s) + "'");
}

inline std::string to_string(Flavor f) { return f == Flavor::fixed ? "fixed" : "data-dependent"; }

inline Flavor parse_flavor(std::string_view s) {
    if (s == "fixed") return Flavor::fixed;
    if (s == "data-dependent") return Flavor::data_dependent;
    throw ConfigError("unknown flavor '" + std::string(s) + "'");
}

/// Coefficients of the generating mechanism. W1 and W2 are on the
/// probability scale; every other node is Bernoulli with a logit-linear
/// predictor. A, Z, M and Y are zeroed for unselected rows.
struct DgmCoefficients {
    double w1_prob = 0.5;
    double w2_base = 0.4;
    double w2_w1 = 0.2;

    std::array<double, 3> selection{-1.0, std::log(4.0), std::log(4.0)};   // 1, W1, W2
    std::array<double, 3> treatment{0.0, 0.0, 0.0};                         // 1, W1, W2
    std::array<double, 4> confounder{0.0, std::log(4.0), 0.0, -std::log(2.0)};  // 1, A, W1, W2
    std::array<double, 5> mediator{-std::log(3.0), std::log(10.0), 0.0, 0.0,
                                   -std::log(1.4)};  // 1, Z, A, W1, W2
    std::array<double, 7> outcome{std::log(1.2), std::log(3.0), std::log(3.0), 0.0, 0.0,
                                  -std::log(1.2), std::log(1.2)};  // 1, M, Z, A, W1, W2, Z:W2

    double p_w1() const { return w1_prob; }
    double p_w2(int w1) const { return w2_base + w2_w1 * w1; }
    double p_selected(int w1, int w2) const {
        return expit(selection[0] + selection[1] * w1 + selection[2] * w2);
    }
    double p_a(int w1, int w2) const { return expit(treatment[0] + treatment[1] * w1 + treatment[2] * w2); }
    double p_z(int a, int w1, int w2) const {
        return expit(confounder[0] + confounder[1] * a + confounder[2] * w1 + confounder[3] * w2);
    }
    double p_m(int z, int a, int w1, int w2) const {
        return expit(mediator[0] + mediator[1] * z + mediator[2] * a + mediator[3] * w1 + mediator[4] * w2);
    }
    double p_y(int m, int z, int a, int w1, int w2) const {
        return expit(outcome[0] + outcome[1] * m + outcome[2] * z + outcome[3] * a + outcome[4] * w1 +
                     outcome[5] * w2 + outcome[6] * z * w2);
    }
};

struct DgmSpec {
    DgmCoefficients coef;
    Arm arm = Arm::correct;
    Eigen::Index n = 5000;    // selected (analysis) rows per replicate
    int replicates = 1000;
    std::uint64_t seed = 20190101;
};

/// All candidate rows drawn until `n` were selected; A, Z, M, Y already masked.
struct DgmDraws {
    std::vector<int> w1, w2, selected, a, z, m, y;
    // the same nodes before masking by the selection indicator
    std::vector<int> a_latent, z_latent, m_latent, y_latent;

    std::size_t size() const { return w1.size(); }

    Dataset analysis_sample() const {
        std::vector<Eigen::Index> keep;
        for (std::size_t i = 0; i < size(); ++i)
            if (selected[i]) keep.push_back(static_cast<Eigen::Index>(i));
        return to_dataset().take(keep);
    }

    Dataset to_dataset() const {
        const auto n = static_cast<Eigen::Index>(size());
        Dataset d;
        d.a.resize(n);
        d.z.resize(n);
        d.m.resize(n);
        d.y.resize(n);
        d.w.resize(n, 2);
        d.w_names = {"W1", "W2"};
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            d.a[i] = a[k];
            d.z[i] = z[k];
            d.m[i] = m[k];
            d.y[i] = y[k];
            d.w(i, 0) = w1[k];
            d.w(i, 1) = w2[k];
        }
        return d;
    }
};

enum DgmStream : std::uint64_t { kStreamW1 = 1, kStreamW2, kStreamSelect, kStreamA, kStreamZ, kStreamM, kStreamY };

inline DgmDraws draw_dgm(const DgmSpec& spec, std::uint64_t replicate) {
    if (spec.n < 1) throw ConfigError("sample size must be positive");
    const auto key = static_cast<std::uint64_t>(spec.n);
    auto s_w1 = make_stream(spec.seed, {key, replicate, kStreamW1});
    auto s_w2 = make_stream(spec.seed, {key, replicate, kStreamW2});
    auto s_sel = make_stream(spec.seed, {key, replicate, kStreamSelect});
    auto s_a = make_stream(spec.seed, {key, replicate, kStreamA});
    auto s_z = make_stream(spec.seed, {key, replicate, kStreamZ});
    auto s_m = make_stream(spec.seed, {key, replicate, kStreamM});
    auto s_y = make_stream(spec.seed, {key, replicate, kStreamY});
    const auto& c = spec.coef;

    DgmDraws d;
    Eigen::Index selected = 0;
    while (selected < spec.n) {
        const int w1 = bernoulli(s_w1, c.p_w1());
        const int w2 = bernoulli(s_w2, c.p_w2(w1));
        const int del = bernoulli(s_sel, c.p_selected(w1, w2));
        const int a = bernoulli(s_a, c.p_a(w1, w2));
        const int z = bernoulli(s_z, c.p_z(a, w1, w2));
        const int m = bernoulli(s_m, c.p_m(z, a, w1, w2));
        const int y = bernoulli(s_y, c.p_y(m, z, a, w1, w2));
        d.w1.push_back(w1);
        d.w2.push_back(w2);
        d.selected.push_back(del);
        d.a_latent.push_back(a);
        d.z_latent.push_back(z);
        d.m_latent.push_back(m);
        d.y_latent.push_back(y);
        d.a.push_back(del * a);
        d.z.push_back(del * z);
        d.m.push_back(del * m);
        d.y.push_back(del * y);
        selected += del;
    }
    return d;
}

inline Dataset generate_dgm(const DgmSpec& spec, std::uint64_t replicate) {
    return draw_dgm(spec, replicate).analysis_sample();
}

// Per-W-cell probability, indexed by 2*W1 + W2.
using CellValues = std::array<double, 4>;

struct Truth {
    std::array<double, 3> psi{};  // Psi(a,g_{a*}), Psi(a*,g_{a*}), Psi(a,g_a)
    double sde = 0.0;
    double sie = 0.0;
};

// Law of (W1, W2) among selected rows.
inline CellValues selected_w_law(const DgmCoefficients& c) {
    CellValues p{};
    double total = 0.0;
    for (int w1 = 0; w1 <= 1; ++w1)
        for (int w2 = 0; w2 <= 1; ++w2) {
            const double pw1 = w1 ? c.p_w1() : 1.0 - c.p_w1();
            const double pw2 = w2 ? c.p_w2(w1) : 1.0 - c.p_w2(w1);
            p[2 * w1 + w2] = pw1 * pw2 * c.p_selected(w1, w2);
            total += p[2 * w1 + w2];
        }
    for (auto& v : p) v /= total;
    return p;
}

inline CellValues true_policy(const DgmCoefficients& c, int a_star) {
    CellValues g{};
    for (int w1 = 0; w1 <= 1; ++w1)
        for (int w2 = 0; w2 <= 1; ++w2) {
            const double pz = c.p_z(a_star, w1, w2);
            g[2 * w1 + w2] = c.p_m(1, a_star, w1, w2) * pz + c.p_m(0, a_star, w1, w2) * (1.0 - pz);
        }
    return g;
}

/// Psi_0(a, g) by exact summation over (W1, W2, Z, M) under the selected W law.
inline double enumerate_psi(const DgmCoefficients& c, int a, const CellValues& g) {
    const auto pw = selected_w_law(c);
    double psi = 0.0;
    for (int w1 = 0; w1 <= 1; ++w1)
        for (int w2 = 0; w2 <= 1; ++w2) {
            const int cell = 2 * w1 + w2;
            double inner = 0.0;
            for (int z = 0; z <= 1; ++z) {
                const double pz = z ? c.p_z(a, w1, w2) : 1.0 - c.p_z(a, w1, w2);
                const double qm = g[cell] * c.p_y(1, z, a, w1, w2) + (1.0 - g[cell]) * c.p_y(0, z, a, w1, w2);
                inner += pz * qm;
            }
            psi += pw[cell] * inner;
        }
    return psi;
}

/// Truths for levels (a, a*) given the intervention laws g_a and g_{a*}.
inline Truth compute_truth(const DgmCoefficients& c, const CellValues& g_a, const CellValues& g_a_star, int a = 1,
                           int a_star = 0) {
    Truth t;
    t.psi[kDirect] = enumerate_psi(c, a, g_a_star);
    t.psi[kBaseline] = enumerate_psi(c, a_star, g_a_star);
    t.psi[kTotal] = enumerate_psi(c, a, g_a);
    t.sde = t.psi[kDirect] - t.psi[kBaseline];
    t.sie = t.psi[kTotal] - t.psi[kDirect];
    return t;
}

// Fixed-parameter truth at the true intervention laws.
inline Truth compute_truth(const DgmCoefficients& c, int a = 1, int a_star = 0) {
    return compute_truth(c, true_policy(c, a), true_policy(c, a_star), a, a_star);
}

// The fitted intervention evaluated on the four W cells.
inline CellValues fitted_policy_cells(const Dataset& data, ScmVariant variant, const ModelSpec& spec, int a_star) {
    const auto parsed = parse_models(spec, data, variant);
    const auto models = fit_mediation_models(data, variant, parsed, spec.truncation);
    Dataset grid;
    grid.a = Vector::Zero(4);
    grid.z = Vector::Zero(4);
    grid.m = Vector::Zero(4);
    grid.y = Vector::Zero(4);
    grid.w.resize(4, 2);
    grid.w << 0, 0, 0, 1, 1, 0, 1, 1;
    grid.w_names = {"W1", "W2"};
    const auto policy = policy_from_models(models, grid, a_star, spec.truncation);
    return {policy.g[0], policy.g[1], policy.g[2], policy.g[3]};
}

inline ModelSpec models_for_arm(Arm arm, ScmVariant variant) {
    const bool with_a = variant == ScmVariant::direct_ae;
    ModelSpec s;
    s.outcome = with_a ? "M + Z + A + W1 + W2 + Z:W2" : "M + Z + W1 + W2 + Z:W2";
    s.mediator = with_a ? "Z + A + W1 + W2" : "Z + W1 + W2";
    s.confounder = "A + W1 + W2";
    s.stratum = "W1 + W2";
    s.treatment = "W1 + W2";
    if (arm == Arm::missy) s.outcome = "Z";
    if (arm == Arm::missm) s.mediator = "W1 + W2";
    return s;
}

inline ModelSpec saturated_models(ScmVariant variant) {
    const bool with_a = variant == ScmVariant::direct_ae;
    ModelSpec s;
    s.outcome = with_a ? "M*Z*A*W1*W2" : "M*Z*W1*W2";
    s.mediator = with_a ? "Z*A*W1*W2" : "Z*W1*W2";
    s.confounder = "A*W1*W2";
    s.stratum = "W1*W2";
    s.treatment = "W1*W2";
    return s;
}

struct StudyConfig {
    DgmSpec dgm;
    std::vector<Eigen::Index> sizes{5000};
    std::vector<EstimatorKind> estimators{kAllEstimators.begin(), kAllEstimators.end()};
    ScmVariant variant = ScmVariant::iv;
    VarianceMethod variance = VarianceMethod::ic;
    Flavor flavor = Flavor::data_dependent;
    int boot_reps = 500;
    // Model formulas; defaults follow the arm when unset.
    std::optional<ModelSpec> models;
    double truncation = 1e-3;
    // Average per-replicate bias/truth ratios instead of mean bias / mean truth.
    bool pct_bias_per_replicate = false;
};

inline constexpr double kNearZeroTruth = 1e-4;
inline constexpr double kFailureFlagFraction = 0.05;

struct ReportRow {
    std::string estimator;
    std::string estimand;
    Eigen::Index n = 0;
    std::string arm;
    std::string flavor;
    double bias = 0.0;
    double pct_bias = 0.0;   // NaN when the truth is near zero
    double se_sqrt_n = 0.0;
    double coverage = 0.0;
    double mse = 0.0;
    int failures = 0;
    int replicates = 0;
    double mean_truth = 0.0;
};

struct SimulationReport {
    std::vector<ReportRow> rows;
    std::string variance;
    std::string variant;
    int replicates = 0;
    std::uint64_t seed = 0;
    // Largest |Pn D1| and |Pn D2| over every targeted TMLE fit.
    double max_score_d1 = 0.0;
    double max_score_d2 = 0.0;
    std::vector<std::string> notes;

    const ReportRow& row(const std::string& estimator, const std::string& estimand, Eigen::Index n) const {
        for (const auto& r : rows)
            if (r.estimator == estimator && r.estimand == estimand && r.n == n) return r;
        throw std::out_of_range("no report row " + estimator + "/" + estimand);
    }
};

namespace detail {

struct ReplicateOutcome {
    bool ok = false;
    // [estimator][0=SDE,1=SIE]
    std::vector<std::array<double, 2>> estimate, se, truth;
    double score_d1 = 0.0;
    double score_d2 = 0.0;
};

}  // namespace detail

inline SimulationReport run_study(const StudyConfig& cfg) {
    if (cfg.dgm.replicates < 2) throw ConfigError("replicate count must be at least 2");
    if (cfg.estimators.empty()) throw ConfigError("no estimator requested");
    ModelSpec models = cfg.models.value_or(models_for_arm(cfg.dgm.arm, cfg.variant));
    models.truncation = cfg.truncation;
    const Truth fixed_truth = compute_truth(cfg.dgm.coef);

    SimulationReport report;
    report.variance = to_string(cfg.variance);
    report.variant = to_string(cfg.variant);
    report.replicates = cfg.dgm.replicates;
    report.seed = cfg.dgm.seed;

    const std::size_t ne = cfg.estimators.size();
    for (Eigen::Index n : cfg.sizes) {
        DgmSpec spec = cfg.dgm;
        spec.n = n;
        std::vector<detail::ReplicateOutcome> outcomes(static_cast<std::size_t>(cfg.dgm.replicates));
        parallel_for(outcomes.size(), [&](std::size_t r) {
            auto& out = outcomes[r];
            try {
                const Dataset data = generate_dgm(spec, r);
                EffectsOptions opts;
                opts.variance = cfg.variance;
                opts.boot_reps = cfg.boot_reps;
                opts.seed = make_stream(cfg.dgm.seed, {static_cast<std::uint64_t>(n), r, 0xb5u})();
                const auto res = estimate_effects(data, cfg.variant, cfg.estimators, models, opts);

                Truth truth = fixed_truth;
                if (cfg.flavor == Flavor::data_dependent)
                    truth = compute_truth(cfg.dgm.coef, fitted_policy_cells(data, cfg.variant, models, 1),
                                          fitted_policy_cells(data, cfg.variant, models, 0));
                for (const auto& er : res.estimators) {
                    const auto& sde = er.effect("SDE");
                    const auto& sie = er.effect("SIE");
                    out.estimate.push_back({sde.point, sie.point});
                    out.se.push_back({sde.se, sie.se});
                    out.truth.push_back({truth.sde, truth.sie});
                    if (er.estimator == EstimatorKind::tmle)
                        for (const auto& c : er.components) {
                            out.score_d1 = std::max(out.score_d1, std::abs(c.d1.mean()));
                            out.score_d2 = std::max(out.score_d2, std::abs(c.d2.mean()));
                        }
                }
                out.ok = true;
            } catch (const EstimationError&) {
                out.ok = false;
            }
        });

        int failures = 0;
        for (const auto& o : outcomes) {
            if (!o.ok) {
                ++failures;
                continue;
            }
            report.max_score_d1 = std::max(report.max_score_d1, o.score_d1);
            report.max_score_d2 = std::max(report.max_score_d2, o.score_d2);
        }
        const int ok = cfg.dgm.replicates - failures;
        if (failures > kFailureFlagFraction * cfg.dgm.replicates)
            report.notes.push_back("n=" + std::to_string(n) + ": " + std::to_string(failures) +
                                   " replicate failures exceed 5%");

        const std::array<const char*, 2> names{"SDE", "SIE"};
        for (std::size_t e = 0; e < ne; ++e)
            for (std::size_t k = 0; k < 2; ++k) {
                ReportRow row;
                row.estimator = to_string(cfg.estimators[e]);
                row.estimand = names[k];
                row.n = n;
                row.arm = to_string(cfg.dgm.arm);
                row.flavor = to_string(cfg.flavor);
                row.failures = failures;
                row.replicates = ok;
                double sum_err = 0, sum_sq = 0, sum_se = 0, sum_truth = 0, sum_ratio = 0;
                int covered = 0;
                for (const auto& o : outcomes) {
                    if (!o.ok) continue;
                    const double est = o.estimate[e][k], se = o.se[e][k], truth = o.truth[e][k];
                    const double err = est - truth;
                    sum_err += err;
                    sum_sq += err * err;
                    sum_se += se;
                    sum_truth += truth;
                    sum_ratio += err / std::abs(truth);
                    if (est - kNormalQuantile975 * se <= truth && truth <= est + kNormalQuantile975 * se) ++covered;
                }
                const double cnt = std::max(1, ok);
                row.bias = sum_err / cnt;
                row.mse = sum_sq / cnt;
                row.se_sqrt_n = sum_se / cnt * std::sqrt(static_cast<double>(n));
                row.coverage = 100.0 * covered / cnt;
                row.mean_truth = sum_truth / cnt;
                if (std::abs(row.mean_truth) < kNearZeroTruth) {
                    row.pct_bias = std::numeric_limits<double>::quiet_NaN();
                    report.notes.push_back(row.estimator + "/" + row.estimand +
                                           ": truth near zero, %bias not reported (see absolute bias)");
                } else {
                    row.pct_bias = cfg.pct_bias_per_replicate ? 100.0 * sum_ratio / cnt
                                                              : 100.0 * row.bias / std::abs(row.mean_truth);
                }
                report.rows.push_back(row);
            }
    }
    return report;
}

inline constexpr const char* kReportColumns =
    "estimator,estimand,n,arm,flavor,bias,pct_bias,se_sqrt_n,coverage,mse,failures";

inline void write_report_csv(const SimulationReport& report, std::ostream& out) {
    out << kReportColumns << '\n';
    auto num = [](double v) {
        if (std::isnan(v)) return std::string("NA");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const auto& r : report.rows)
        out << r.estimator << ',' << r.estimand << ',' << r.n << ',' << r.arm << ',' << r.flavor << ','
            << num(r.bias) << ',' << num(r.pct_bias) << ',' << num(r.se_sqrt_n) << ',' << num(r.coverage) << ','
            << num(r.mse) << ',' << r.failures << '\n';
}

inline nlohmann::json report_to_json(const SimulationReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json j{{"estimator", r.estimator}, {"estimand", r.estimand}, {"n", r.n},
                         {"arm", r.arm},             {"flavor", r.flavor},     {"bias", r.bias},
                         {"se_sqrt_n", r.se_sqrt_n}, {"coverage", r.coverage}, {"mse", r.mse},
                         {"failures", r.failures}};
        j["pct_bias"] = std::isnan(r.pct_bias) ? nlohmann::json(nullptr) : nlohmann::json(r.pct_bias);
        rows.push_back(std::move(j));
    }
    return nlohmann::json{{"schema_version", 1},
                          {"variance", report.variance},
                          {"variant", report.variant},
                          {"replicates", report.replicates},
                          {"seed", report.seed},
                          {"diagnostics",
                           {{"max_abs_mean_d1", report.max_score_d1}, {"max_abs_mean_d2", report.max_score_d2}}},
                          {"notes", report.notes},
                          {"rows", rows}};
}

}  // namespace stochmed
