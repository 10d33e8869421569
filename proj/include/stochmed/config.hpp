#pragma once

#include "stochmed/dataset.hpp"
#include "stochmed/error.hpp"
#include "stochmed/formula.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace stochmed {

// Which structural causal model the nuisance fits follow.
//   iv          A randomized; no A->M or A->Y edge; marginal P(A=a).
//   nonrandom_a A depends on W; P(A=a|W) and a second targeting step.
//   direct_ae   A randomized but enters the M and Y models.
enum class ScmVariant { iv, nonrandom_a, direct_ae };

enum class EstimatorKind { tmle, iptw, ee };

inline constexpr std::array<EstimatorKind, 3> kAllEstimators{EstimatorKind::tmle, EstimatorKind::iptw,
                                                             EstimatorKind::ee};

inline std::string to_string(ScmVariant v) {
    switch (v) {
        case ScmVariant::iv: return "iv";
        case ScmVariant::nonrandom_a: return "nonrandom-a";
        case ScmVariant::direct_ae: return "direct-ae";
    }
    return "?";
}

inline ScmVariant parse_variant(std::string_view s) {
    if (s == "iv") return ScmVariant::iv;
    if (s == "nonrandom-a") return ScmVariant::nonrandom_a;
    if (s == "direct-ae") return ScmVariant::direct_ae;
    throw ConfigError("unknown variant '" + std::string(s) + "'");
}

inline std::string to_string(EstimatorKind e) {
    switch (e) {
        case EstimatorKind::tmle: return "tmle";
        case EstimatorKind::iptw: return "iptw";
        case EstimatorKind::ee: return "ee";
    }
    return "?";
}

inline EstimatorKind parse_estimator(std::string_view s) {
    if (s == "tmle") return EstimatorKind::tmle;
    if (s == "iptw") return EstimatorKind::iptw;
    if (s == "ee") return EstimatorKind::ee;
    throw ConfigError("unknown estimator '" + std::string(s) + "'");
}

/// Right-hand sides of the nuisance regressions. Empty strings mean main
/// effects of every variable the variant allows.
struct ModelSpec {
    std::string outcome;      // Y on M, Z, W (+A for direct-ae)
    std::string mediator;     // M on Z, W (+A for direct-ae)
    std::string confounder;   // Z on A, W
    std::string stratum;      // marginalized mediator regression on W, within A=a
    std::string treatment;    // A on W (nonrandom-a only)
    double truncation = 1e-3;
};

struct ParsedModels {
    ModelFormula outcome;
    ModelFormula mediator;
    ModelFormula confounder;
    ModelFormula stratum;
    ModelFormula treatment;
};

inline ParsedModels parse_models(const ModelSpec& spec, const Dataset& data, ScmVariant variant) {
    if (!(spec.truncation > 0.0 && spec.truncation <= 0.1))
        throw ConfigError("truncation must lie in (0, 0.1]");
    const bool with_a = variant == ScmVariant::direct_ae;
    auto pick = [&](const std::string& text, std::vector<std::string> defaults) {
        if (!text.empty()) return ModelFormula::parse(text, data.w_names);
        for (const auto& w : data.w_names) defaults.push_back(w);
        return ModelFormula::main_effects(defaults);
    };
    ParsedModels p;
    p.outcome = pick(spec.outcome, with_a ? std::vector<std::string>{"M", "Z", "A"}
                                          : std::vector<std::string>{"M", "Z"});
    p.mediator = pick(spec.mediator, with_a ? std::vector<std::string>{"Z", "A"} : std::vector<std::string>{"Z"});
    p.confounder = pick(spec.confounder, {"A"});
    p.stratum = pick(spec.stratum, {});
    p.treatment = pick(spec.treatment, {});

    p.outcome.check_variables(data, with_a ? std::vector<std::string>{"M", "Z", "A"}
                                           : std::vector<std::string>{"M", "Z"},
                              "outcome");
    p.mediator.check_variables(data, with_a ? std::vector<std::string>{"Z", "A"} : std::vector<std::string>{"Z"},
                               "mediator");
    p.confounder.check_variables(data, {"A"}, "confounder");
    p.stratum.check_variables(data, {}, "stratum");
    p.treatment.check_variables(data, {}, "treatment");
    return p;
}

}  // namespace stochmed
