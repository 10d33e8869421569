#pragma once

// Counterfactual means Psi(a, g_{a*}) = E[ E_g[ E(Y | M, Z, W) | Z, W ] | A=a, W ]
// under the stochastic mediator intervention g, estimated by sequential
// regression with targeting (TMLE), by the one-step estimating equation on
// the untargeted fits (EE), or by weighting (IPTW).

#include "stochmed/config.hpp"
#include "stochmed/dataset.hpp"
#include "stochmed/error.hpp"
#include "stochmed/formula.hpp"
#include "stochmed/intervention.hpp"
#include "stochmed/linmod.hpp"

#include <optional>
#include <string>

namespace stochmed {

// One of the three counterfactual means an SDE/SIE decomposition needs.
struct PsiTarget {
    int a = 1;
    InterventionPolicy policy;
    std::string label;
};

inline std::string psi_label(int a, int a_star) {
    return "psi(" + std::to_string(a) + ",g" + std::to_string(a_star) + ")";
}

/// Everything fitted once per dataset and shared by all targets/estimators.
struct Nuisances {
    ScmVariant variant = ScmVariant::iv;
    ParsedModels formulas;
    double truncation = 1e-3;

    MediationModels mediation;
    GlmFit outcome_fit;
    Vector qy_obs;     // Q_Y at the observed (M, Z, [A,] W)
    Vector qy_m1;      // ... with M set to 1
    Vector qy_m0;      // ... with M set to 0
    Vector gm_obs;     // P(M=1 | observed Z, [A,] W)
    Vector prop_a1;    // P(A=1) or P(A=1 | W), truncated, per row
    GlmFit treatment_fit;

    Vector propensity(int a) const {
        return a == 1 ? prop_a1 : clamp_probabilities((1.0 - prop_a1.array()).matrix(), truncation);
    }
};

struct PolicyOverrides {
    std::optional<InterventionPolicy> g0;
    std::optional<InterventionPolicy> g1;
};

inline void require_strata(const Dataset& data) {
    for (int a = 0; a <= 1; ++a) {
        require_support(data, a);
        for (int mval = 0; mval <= 1; ++mval) {
            bool found = false;
            for (Eigen::Index i = 0; i < data.size() && !found; ++i)
                found = data.a[i] == a && data.m[i] == mval;
            if (!found)
                throw EstimationError("empty stratum A=" + std::to_string(a) + ", M=" + std::to_string(mval));
        }
    }
}

inline Nuisances fit_nuisances(const Dataset& data, ScmVariant variant, const ModelSpec& spec) {
    Nuisances nu;
    nu.variant = variant;
    nu.truncation = spec.truncation;
    nu.formulas = parse_models(spec, data, variant);
    const Eigen::Index n = data.size();

    nu.mediation = fit_mediation_models(data, variant, nu.formulas, spec.truncation);
    nu.gm_obs = nu.mediation.mediator.predict(data);

    nu.outcome_fit = fit_logistic(nu.formulas.outcome.design(data), data.y, Vector::Ones(n), Vector::Zero(n));
    nu.qy_obs = predict_proba(nu.outcome_fit, nu.formulas.outcome.design(data));
    nu.qy_m1 = predict_proba(nu.outcome_fit, nu.formulas.outcome.design(data, Setting{std::nullopt, std::nullopt, 1.0}));
    nu.qy_m0 = predict_proba(nu.outcome_fit, nu.formulas.outcome.design(data, Setting{std::nullopt, std::nullopt, 0.0}));

    if (variant == ScmVariant::nonrandom_a) {
        nu.treatment_fit = fit_logistic(nu.formulas.treatment.design(data), data.a, Vector::Ones(n), Vector::Zero(n));
        nu.prop_a1 = clamp_probabilities(predict_proba(nu.treatment_fit, nu.formulas.treatment.design(data)),
                                         spec.truncation);
    } else {
        const double p1 = std::clamp(data.a.mean(), spec.truncation, 1.0 - spec.truncation);
        nu.prop_a1 = Vector::Constant(n, p1);
    }
    return nu;
}

/// Mediator density ratio over the treatment mechanism:
///   h1 = I(A=a) g*(M) / (P(A=a|.) g_M(M | Z, W)),
/// where g*(M) and g_M(M|.) are the probabilities of the observed M.
inline Vector compute_h1(const Dataset& data, int a, const Vector& policy_g, const Vector& gm_obs,
                         const Vector& propensity_a) {
    const Eigen::Index n = data.size();
    if (policy_g.size() != n || gm_obs.size() != n || propensity_a.size() != n)
        throw std::invalid_argument("compute_h1: length mismatch");
    Vector h(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.a[i] != a) {
            h[i] = 0.0;
            continue;
        }
        const bool m1 = data.m[i] == 1.0;
        const double num = m1 ? policy_g[i] : 1.0 - policy_g[i];
        const double den = propensity_a[i] * (m1 ? gm_obs[i] : 1.0 - gm_obs[i]);
        h[i] = num / den;
    }
    return h;
}

struct Fluctuation {
    double epsilon = 0.0;
    GlmFit fit;
};

// Intercept-only weighted logistic fluctuation of `initial` towards `outcome`.
inline Fluctuation fluctuate(const Vector& initial, const Vector& outcome, const Vector& weights) {
    if (!(weights.array() > 0.0).any()) throw EstimationError("empty targeting stratum");
    Fluctuation f;
    f.fit = fit_logistic(DesignMatrix::intercept_only(initial.size()), outcome, weights, logit(initial));
    f.epsilon = f.fit.coefficients[0];
    return f;
}

inline Vector shift_logit(const Vector& p, double epsilon) {
    return p.unaryExpr([epsilon](double v) {
        return expit(std::clamp(logit(v) + epsilon, -kLinearPredictorCap, kLinearPredictorCap));
    });
}

struct TargetedOutcome {
    Vector q_star;
    Fluctuation fluctuation;
};

/// Solves sum_i h1_i (Y_i - Q*_i) = 0 along logit(Q*) = logit(Q) + eps.
inline TargetedOutcome target_outcome(const Vector& qy, const Dataset& data, const Vector& h1) {
    TargetedOutcome out;
    out.fluctuation = fluctuate(qy, data.y, h1);
    out.q_star = shift_logit(qy, out.fluctuation.epsilon);
    return out;
}

// Integrates M out of the outcome regression under the intervention.
inline Vector marginalize_mediator(const Vector& q_m1, const Vector& q_m0, const Vector& policy_g) {
    return (q_m1.array() * policy_g.array() + q_m0.array() * (1.0 - policy_g.array())).matrix();
}

/// Fractional logistic regression of the marginalized mediator regression on
/// W within A=a, predicted for every row.
inline Vector regress_z(const Vector& q_m, const Dataset& data, int a, const ModelFormula& formula,
                        GlmFit* fit_out = nullptr) {
    require_support(data, a);
    const DesignMatrix x = formula.design(data);
    GlmFit fit = fit_logistic(x, q_m, data.indicator_a(a), Vector::Zero(data.size()));
    Vector pred = predict_proba(fit, x);
    if (fit_out) *fit_out = std::move(fit);
    return pred;
}

struct TargetedStratum {
    Vector q_z_star;
    Fluctuation fluctuation;
};

/// Second targeting step for non-random A: weights h2 = I(A=a) / P(A=a|W).
inline TargetedStratum target_z(const Vector& q_z, const Vector& q_m, const Dataset& data, int a,
                                const Vector& propensity_a) {
    require_support(data, a);
    const Vector h2 = (data.indicator_a(a).array() / propensity_a.array()).matrix();
    TargetedStratum out;
    out.fluctuation = fluctuate(q_z, q_m, h2);
    out.q_z_star = shift_logit(q_z, out.fluctuation.epsilon);
    return out;
}

/// Result of one Psi(a, g) fit. Vectors are per row of the dataset.
struct PsiFit {
    EstimatorKind estimator = EstimatorKind::tmle;
    std::string label;
    int a = 1;
    int a_star = 0;
    double psi = 0.0;

    Vector qy;     // outcome regression at observed values (targeted for TMLE)
    Vector q_m;    // marginalized mediator regression
    Vector q_z;    // final stratum regression (targeted for nonrandom-a TMLE)
    Vector h1;
    Vector h2;     // I(A=a) / P(A=a|.)
    double epsilon_y = 0.0;
    double epsilon_z = 0.0;
    bool converged = true;

    Vector d0, d1, d2;   // influence-curve components
};

// D0 = Q_Z - mean(Q_Z), D1 = h2 (Q_M - Q_Z), D2 = h1 (Y - Q_Y). For IPTW the
// whole centered influence function h1 Y - psi is carried in D0.
inline void fill_eic(PsiFit& fit, const Dataset& data) {
    const Eigen::Index n = data.size();
    if (fit.estimator == EstimatorKind::iptw) {
        fit.d0 = (fit.h1.array() * data.y.array() - fit.psi).matrix();
        fit.d1 = Vector::Zero(n);
        fit.d2 = Vector::Zero(n);
        return;
    }
    fit.d0 = (fit.q_z.array() - fit.q_z.mean()).matrix();
    fit.d1 = (fit.h2.array() * (fit.q_m - fit.q_z).array()).matrix();
    fit.d2 = (fit.h1.array() * (data.y - fit.qy).array()).matrix();
}

inline PsiFit estimate_psi(const Nuisances& nu, const Dataset& data, const PsiTarget& target,
                           EstimatorKind estimator) {
    check_level(target.a, "a");
    require_support(data, target.a);
    if (target.policy.size() != data.size()) throw ConfigError("policy length does not match the dataset");

    PsiFit fit;
    fit.estimator = estimator;
    fit.label = target.label;
    fit.a = target.a;
    fit.a_star = target.policy.a_star;

    const Vector prop = nu.propensity(target.a);
    fit.h1 = compute_h1(data, target.a, target.policy.g, nu.gm_obs, prop);
    fit.h2 = (data.indicator_a(target.a).array() / prop.array()).matrix();

    if (estimator == EstimatorKind::iptw) {
        fit.psi = (fit.h1.array() * data.y.array()).mean();
        fill_eic(fit, data);
        return fit;
    }

    Vector q_m1 = nu.qy_m1;
    Vector q_m0 = nu.qy_m0;
    fit.qy = nu.qy_obs;
    if (estimator == EstimatorKind::tmle) {
        const auto targeted = target_outcome(nu.qy_obs, data, fit.h1);
        fit.epsilon_y = targeted.fluctuation.epsilon;
        fit.converged = targeted.fluctuation.fit.converged;
        fit.qy = targeted.q_star;
        q_m1 = shift_logit(q_m1, fit.epsilon_y);
        q_m0 = shift_logit(q_m0, fit.epsilon_y);
    }
    fit.q_m = marginalize_mediator(q_m1, q_m0, target.policy.g);

    GlmFit stratum_fit;
    fit.q_z = regress_z(fit.q_m, data, target.a, nu.formulas.stratum, &stratum_fit);
    fit.converged = fit.converged && stratum_fit.converged;

    if (estimator == EstimatorKind::tmle && nu.variant == ScmVariant::nonrandom_a) {
        const auto second = target_z(fit.q_z, fit.q_m, data, target.a, prop);
        fit.epsilon_z = second.fluctuation.epsilon;
        fit.converged = fit.converged && second.fluctuation.fit.converged;
        fit.q_z = second.q_z_star;
    }

    fill_eic(fit, data);
    if (estimator == EstimatorKind::tmle)
        fit.psi = fit.q_z.mean();
    else
        fit.psi = (fit.q_z + fit.d1 + fit.d2).mean();
    return fit;
}

// Convenience entry point fitting the nuisances itself.
inline PsiFit estimate_psi(const Dataset& data, const PsiTarget& target, ScmVariant variant,
                           EstimatorKind estimator, const ModelSpec& spec) {
    return estimate_psi(fit_nuisances(data, variant, spec), data, target, estimator);
}

inline InterventionPolicy nuisance_policy(const Nuisances& nu, const Dataset& data, int a_star,
                                          const PolicyOverrides& overrides = {}) {
    const auto& ext = a_star == 0 ? overrides.g0 : overrides.g1;
    if (ext) {
        if (ext->size() != data.size()) throw ConfigError("external policy length does not match the dataset");
        return *ext;
    }
    return policy_from_models(nu.mediation, data, a_star, nu.truncation);
}

}  // namespace stochmed
