#pragma once

// The stochastic mediator intervention
//
//   g(a*, W) = P(M=1 | Z=1, W) P(Z=1 | A=a*, W) + P(M=1 | Z=0, W) P(Z=0 | A=a*, W),
//
// i.e. the mediator law given W with the intermediate confounder Z
// marginalized at instrument level a*. For direct-ae the mediator model also
// conditions on A, which is set to a* in both factors.

#include "stochmed/config.hpp"
#include "stochmed/dataset.hpp"
#include "stochmed/error.hpp"
#include "stochmed/formula.hpp"
#include "stochmed/linmod.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace stochmed {

/// A fitted logistic model of a binary node whose predictions are truncated
/// to [tau, 1 - tau].
struct BinaryNodeModel {
    ModelFormula formula;
    GlmFit fit;
    double truncation = 1e-3;

    Vector predict(const Dataset& data, const Setting& setting = {}) const {
        return clamp_probabilities(predict_proba(fit, formula.design(data, setting)), truncation);
    }
};

inline BinaryNodeModel fit_binary_node(const ModelFormula& formula, const Dataset& data, const Vector& outcome,
                                       double truncation) {
    BinaryNodeModel model{formula, {}, truncation};
    const Eigen::Index n = data.size();
    model.fit = fit_logistic(formula.design(data), outcome, Vector::Ones(n), Vector::Zero(n));
    return model;
}

// P(M=1 | Z, W) (iv, nonrandom-a) or P(M=1 | Z, A, W) (direct-ae).
struct MediatorModel {
    BinaryNodeModel node;
    ScmVariant variant = ScmVariant::iv;

    Vector predict(const Dataset& data, Setting setting = {}) const {
        if (variant != ScmVariant::direct_ae) setting.a.reset();
        return node.predict(data, setting);
    }
};

// P(Z=1 | A, W).
struct ConfounderModel {
    BinaryNodeModel node;

    Vector predict(const Dataset& data, int a) const {
        return node.predict(data, Setting{static_cast<double>(a), std::nullopt, std::nullopt});
    }
};

struct MediationModels {
    MediatorModel mediator;
    ConfounderModel confounder;
};

enum class PolicySource { estimated, external };

struct InterventionPolicy {
    int a_star = 0;
    Vector g;   // P(M=1) under the intervention, per row
    PolicySource source = PolicySource::estimated;

    Eigen::Index size() const { return g.size(); }
};

inline void check_level(int level, const char* what) {
    if (level != 0 && level != 1) throw ConfigError(std::string(what) + " must be 0 or 1");
}

inline MediationModels fit_mediation_models(const Dataset& data, ScmVariant variant, const ParsedModels& models,
                                            double truncation) {
    MediationModels out;
    out.mediator.variant = variant;
    out.mediator.node = fit_binary_node(models.mediator, data, data.m, truncation);
    out.confounder.node = fit_binary_node(models.confounder, data, data.z, truncation);
    return out;
}

// Untruncated two-term sum over z.
inline Vector combine_policy(const Vector& gm_z1, const Vector& gm_z0, const Vector& gz) {
    return (gm_z1.array() * gz.array() + gm_z0.array() * (1.0 - gz.array())).matrix();
}

inline InterventionPolicy policy_from_models(const MediationModels& models, const Dataset& data, int a_star,
                                             double truncation) {
    check_level(a_star, "a*");
    const auto as = static_cast<double>(a_star);
    const Vector gz = models.confounder.predict(data, a_star);
    const Vector gm1 = models.mediator.predict(data, Setting{as, 1.0, std::nullopt});
    const Vector gm0 = models.mediator.predict(data, Setting{as, 0.0, std::nullopt});
    return InterventionPolicy{a_star, clamp_probabilities(combine_policy(gm1, gm0, gz), truncation),
                              PolicySource::estimated};
}

inline void require_support(const Dataset& data, int level) {
    if (data.count_a(level) == 0)
        throw EstimationError("no support for instrument level " + std::to_string(level));
}

inline InterventionPolicy fit_intervention(const Dataset& data, int a_star, ScmVariant variant,
                                           const ModelSpec& spec) {
    check_level(a_star, "a*");
    require_support(data, a_star);
    const auto parsed = parse_models(spec, data, variant);
    const auto models = fit_mediation_models(data, variant, parsed, spec.truncation);
    return policy_from_models(models, data, a_star, spec.truncation);
}

inline InterventionPolicy load_external_policy(const Vector& values, int a_star) {
    check_level(a_star, "a*");
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (!(values[i] > 0.0 && values[i] < 1.0))
            throw ConfigError("policy value at row " + std::to_string(i + 1) + " is not in (0,1)");
    return InterventionPolicy{a_star, values, PolicySource::external};
}

// Single-column CSV with header `g_star`.
inline void write_policy_csv(const InterventionPolicy& policy, std::ostream& out) {
    out << "g_star\n";
    std::ostringstream line;
    line.precision(17);
    for (Eigen::Index i = 0; i < policy.g.size(); ++i) {
        line.str({});
        line << policy.g[i];
        out << line.str() << '\n';
    }
}

inline Vector read_policy_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("policy file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "g_star") throw ConfigError("policy file must have the single header 'g_star'");
    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            values.push_back(std::stod(line, &used));
            if (used != line.size()) throw std::invalid_argument(line);
        } catch (const std::exception&) {
            throw ConfigError("policy file row " + std::to_string(row) + ": not a number");
        }
    }
    return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline InterventionPolicy load_external_policy_csv(const std::string& path, int a_star) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open policy file '" + path + "'");
    return load_external_policy(read_policy_csv(in), a_star);
}

}  // namespace stochmed
