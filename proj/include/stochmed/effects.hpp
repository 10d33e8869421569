#pragma once

// SDE and SIE for levels (a, a*):
//   SDE = Psi(a, g_{a*}) - Psi(a*, g_{a*})
//   SIE = Psi(a, g_a)    - Psi(a, g_{a*})

#include "stochmed/config.hpp"
#include "stochmed/dataset.hpp"
#include "stochmed/engine.hpp"
#include "stochmed/inference.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stochmed {

// Component order used throughout: Psi(a,g_{a*}), Psi(a*,g_{a*}), Psi(a,g_a).
inline constexpr std::size_t kDirect = 0;
inline constexpr std::size_t kBaseline = 1;
inline constexpr std::size_t kTotal = 2;

struct EffectEstimate {
    std::string estimand;
    EstimatorKind estimator = EstimatorKind::tmle;
    double point = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    VarianceMethod method = VarianceMethod::ic;
    int replicates = 0;
    int failures = 0;
};

struct EffectsOptions {
    int a = 1;
    int a_star = 0;
    VarianceMethod variance = VarianceMethod::ic;
    int boot_reps = 500;
    std::uint64_t seed = 1;
    bool percentile_ci = false;
    PolicyOverrides policies;
};

struct EstimatorResult {
    EstimatorKind estimator = EstimatorKind::tmle;
    std::array<PsiFit, 3> components;
    // Psi(a,g_{a*}), Psi(a*,g_{a*}), Psi(a,g_a), SDE, SIE
    std::vector<EffectEstimate> effects;

    const EffectEstimate& effect(const std::string& name) const {
        for (const auto& e : effects)
            if (e.estimand == name) return e;
        throw std::out_of_range("no estimand " + name);
    }
};

struct EffectsResult {
    ScmVariant variant = ScmVariant::iv;
    Eigen::Index n = 0;
    int a = 1;
    int a_star = 0;
    InterventionPolicy policy_a;
    InterventionPolicy policy_a_star;
    std::vector<EstimatorResult> estimators;

    const EstimatorResult& get(EstimatorKind k) const {
        for (const auto& r : estimators)
            if (r.estimator == k) return r;
        throw std::out_of_range("estimator not computed: " + to_string(k));
    }
};

struct PointFits {
    InterventionPolicy policy_a;
    InterventionPolicy policy_a_star;
    std::vector<std::pair<EstimatorKind, std::array<PsiFit, 3>>> fits;

    bool converged() const {
        for (const auto& [k, comps] : fits)
            for (const auto& c : comps)
                if (!c.converged) return false;
        return true;
    }
};

inline std::array<PsiTarget, 3> effect_targets(int a, int a_star, const InterventionPolicy& g_a,
                                               const InterventionPolicy& g_a_star) {
    return {PsiTarget{a, g_a_star, psi_label(a, a_star)}, PsiTarget{a_star, g_a_star, psi_label(a_star, a_star)},
            PsiTarget{a, g_a, psi_label(a, a)}};
}

inline PointFits fit_points(const Dataset& data, ScmVariant variant, const std::vector<EstimatorKind>& estimators,
                            const ModelSpec& spec, const EffectsOptions& opts) {
    check_level(opts.a, "a");
    check_level(opts.a_star, "a*");
    if (opts.a == opts.a_star) throw ConfigError("a and a* must differ");
    if (estimators.empty()) throw ConfigError("no estimator requested");
    data.validate();
    require_strata(data);

    const Nuisances nu = fit_nuisances(data, variant, spec);
    PointFits out;
    out.policy_a = nuisance_policy(nu, data, opts.a, opts.policies);
    out.policy_a_star = nuisance_policy(nu, data, opts.a_star, opts.policies);
    const auto targets = effect_targets(opts.a, opts.a_star, out.policy_a, out.policy_a_star);
    for (auto kind : estimators) {
        std::array<PsiFit, 3> comps;
        for (std::size_t k = 0; k < 3; ++k) comps[k] = estimate_psi(nu, data, targets[k], kind);
        out.fits.emplace_back(kind, std::move(comps));
    }
    return out;
}

// Points on the original outcome scale: three components, SDE, SIE.
inline std::array<double, 5> effect_points(const std::array<PsiFit, 3>& comps, const OutcomeScale& scale) {
    const double w = scale.width();
    return {scale.to_original(comps[kDirect].psi), scale.to_original(comps[kBaseline].psi),
            scale.to_original(comps[kTotal].psi), w * (comps[kDirect].psi - comps[kBaseline].psi),
            w * (comps[kTotal].psi - comps[kDirect].psi)};
}

inline std::array<std::string, 5> estimand_names(int a, int a_star) {
    return {psi_label(a, a_star), psi_label(a_star, a_star), psi_label(a, a), "SDE", "SIE"};
}

inline PolicyOverrides resample_policies(const PolicyOverrides& p, std::span<const Eigen::Index> rows) {
    auto take = [rows](const std::optional<InterventionPolicy>& pol) -> std::optional<InterventionPolicy> {
        if (!pol) return std::nullopt;
        InterventionPolicy out = *pol;
        out.g.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) out.g[static_cast<Eigen::Index>(i)] = pol->g[rows[i]];
        return out;
    };
    return PolicyOverrides{take(p.g0), take(p.g1)};
}

/// Bootstrap of the whole pipeline, nuisances and policies included.
/// Statistics are laid out estimator-major, five per estimator.
inline BootstrapDraws bootstrap_effects(const Dataset& data, ScmVariant variant,
                                        const std::vector<EstimatorKind>& estimators, const ModelSpec& spec,
                                        const EffectsOptions& opts) {
    return bootstrap(data.size(), opts.boot_reps, opts.seed,
                     [&](std::span<const Eigen::Index> rows) -> std::optional<std::vector<double>> {
                         const Dataset sample = data.take(rows);
                         EffectsOptions local = opts;
                         local.policies = resample_policies(opts.policies, rows);
                         const PointFits pf = fit_points(sample, variant, estimators, spec, local);
                         if (!pf.converged()) return std::nullopt;
                         std::vector<double> out;
                         for (const auto& [kind, comps] : pf.fits)
                             for (double v : effect_points(comps, sample.outcome_scale)) out.push_back(v);
                         return out;
                     });
}

inline VarianceReport bootstrap_variance(const Dataset& data, ScmVariant variant, EstimatorKind estimator,
                                         const ModelSpec& spec, const EffectsOptions& opts,
                                         std::size_t estimand_index) {
    const auto draws = bootstrap_effects(data, variant, {estimator}, spec, opts);
    return bootstrap_report(draws, estimand_index);
}

inline EffectsResult estimate_effects(const Dataset& data, ScmVariant variant,
                                      const std::vector<EstimatorKind>& estimators, const ModelSpec& spec,
                                      const EffectsOptions& opts = {}) {
    PointFits pf = fit_points(data, variant, estimators, spec, opts);
    EffectsResult res;
    res.variant = variant;
    res.n = data.size();
    res.a = opts.a;
    res.a_star = opts.a_star;
    res.policy_a = pf.policy_a;
    res.policy_a_star = pf.policy_a_star;

    std::optional<BootstrapDraws> draws;
    if (opts.variance == VarianceMethod::bootstrap) draws = bootstrap_effects(data, variant, estimators, spec, opts);

    const auto names = estimand_names(opts.a, opts.a_star);
    const double width = data.outcome_scale.width();
    for (std::size_t e = 0; e < pf.fits.size(); ++e) {
        auto& [kind, comps] = pf.fits[e];
        EstimatorResult r;
        r.estimator = kind;
        const auto points = effect_points(comps, data.outcome_scale);

        std::array<VarianceReport, 5> var;
        if (draws) {
            for (std::size_t k = 0; k < 5; ++k) var[k] = bootstrap_report(*draws, 5 * e + k);
        } else {
            std::array<EicVector, 3> eic;
            for (std::size_t k = 0; k < 3; ++k) eic[k] = compute_eic(comps[k], data);
            for (std::size_t k = 0; k < 3; ++k) var[k] = ic_variance(eic[k]);
            var[3] = ic_variance(eic[kDirect], eic[kBaseline]);
            var[4] = ic_variance(eic[kTotal], eic[kDirect]);
            for (auto& v : var) v.se *= width;
        }
        for (std::size_t k = 0; k < 5; ++k) {
            EffectEstimate est;
            est.estimand = names[k];
            est.estimator = kind;
            est.point = points[k];
            est.se = var[k].se;
            est.method = var[k].method;
            est.replicates = var[k].replicates;
            est.failures = var[k].failures;
            if (opts.percentile_ci && var[k].percentile) {
                est.lower = var[k].percentile->first;
                est.upper = var[k].percentile->second;
            } else {
                est.lower = est.point - kNormalQuantile975 * est.se;
                est.upper = est.point + kNormalQuantile975 * est.se;
            }
            r.effects.push_back(est);
        }
        r.components = std::move(comps);
        res.estimators.push_back(std::move(r));
    }
    return res;
}

}  // namespace stochmed
