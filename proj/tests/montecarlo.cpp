// Monte-Carlo properties of the estimators on the simulation design. Slower
// than the unit suite; each test runs a few hundred replicates at most.

#include "stochmed/effects.hpp"
#include "stochmed/simlab.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

using namespace stochmed;

namespace {

const std::vector<EstimatorKind> kTmleEe{EstimatorKind::tmle, EstimatorKind::ee};

}  // namespace

// With M modeled on W alone the fitted policy no longer depends on a*, so the
// data-dependent indirect effect is exactly zero and only its absolute bias is
// meaningful.
TEST(DoubleRobustness, MisspecifiedMediatorModelTmleUnbiased) {
    StudyConfig cfg;
    cfg.dgm.arm = Arm::missm;
    cfg.dgm.replicates = 500;
    cfg.sizes = {5000};
    cfg.estimators = {EstimatorKind::tmle};
    const auto report = run_study(cfg);
    EXPECT_LE(std::abs(report.row("tmle", "SDE", 5000).pct_bias), 3.0);
    const auto& sie = report.row("tmle", "SIE", 5000);
    EXPECT_TRUE(std::isnan(sie.pct_bias));
    EXPECT_LE(std::abs(sie.bias), 1e-3);
}

TEST(DoubleRobustness, MisspecifiedOutcomeModelTmleAndEeUnbiased) {
    StudyConfig cfg;
    cfg.dgm.arm = Arm::missy;
    cfg.dgm.replicates = 500;
    cfg.dgm.seed = 4242;
    cfg.sizes = {5000};
    cfg.estimators = kTmleEe;
    const auto report = run_study(cfg);
    for (const char* est : {"tmle", "ee"})
        for (const char* estimand : {"SDE", "SIE"})
            EXPECT_LE(std::abs(report.row(est, estimand, 5000).pct_bias), 3.0) << est << " " << estimand;
}

TEST(Targeting, FluctuationIsSmallUnderCorrectModels) {
    DgmSpec spec;
    spec.n = 5000;
    const ModelSpec models = models_for_arm(Arm::correct, ScmVariant::iv);
    const int reps = 200;
    std::atomic<int> small{0}, total{0};
    for (int r = 0; r < reps; ++r) {
        const Dataset d = generate_dgm(spec, static_cast<std::uint64_t>(r));
        const auto res = estimate_effects(d, ScmVariant::iv, {EstimatorKind::tmle}, models);
        for (const auto& c : res.get(EstimatorKind::tmle).components) {
            total += 1;
            small += std::abs(c.epsilon_y) < 0.1 ? 1 : 0;
        }
    }
    EXPECT_GE(small.load(), 0.95 * total.load());
}

TEST(NonRandomTreatment, SecondTargetingSolvesScoreAndIsUnbiased) {
    StudyConfig cfg;
    cfg.dgm.coef.treatment = {0.0, 0.0, 0.5};
    cfg.dgm.replicates = 200;
    cfg.sizes = {5000};
    cfg.variant = ScmVariant::nonrandom_a;
    cfg.estimators = kTmleEe;
    const auto report = run_study(cfg);
    EXPECT_LE(report.max_score_d1, 1e-6);
    EXPECT_LE(report.max_score_d2, 1e-6);
    for (const char* estimand : {"SDE", "SIE"}) {
        const auto& row = report.row("tmle", estimand, 5000);
        EXPECT_LE(std::abs(row.pct_bias), 5.0) << estimand;
        EXPECT_GE(row.coverage, 88.0) << estimand;
    }
}

TEST(Inference, InfluenceCurveAgreesWithBootstrap) {
    DgmSpec spec;
    spec.n = 5000;
    spec.seed = 99;
    const Dataset d = generate_dgm(spec, 0);
    const ModelSpec models = models_for_arm(Arm::correct, ScmVariant::iv);
    const auto ic = estimate_effects(d, ScmVariant::iv, {EstimatorKind::tmle}, models);
    EffectsOptions opts;
    opts.variance = VarianceMethod::bootstrap;
    opts.boot_reps = 200;
    opts.seed = 3;
    const auto boot = estimate_effects(d, ScmVariant::iv, {EstimatorKind::tmle}, models, opts);
    const double ic_se = ic.get(EstimatorKind::tmle).effect("SDE").se;
    const double boot_se = boot.get(EstimatorKind::tmle).effect("SDE").se;
    EXPECT_NEAR(boot_se / ic_se, 1.0, 0.15);
}

TEST(OracleConsistency, LargeSampleMatchesEnumeratedTruthForEveryVariant) {
    const Truth truth = compute_truth(DgmCoefficients{});
    for (auto variant : {ScmVariant::iv, ScmVariant::nonrandom_a, ScmVariant::direct_ae}) {
        DgmSpec spec;
        spec.n = 1'000'000;
        spec.seed = 12;
        const Dataset d = generate_dgm(spec, 0);
        const auto res = estimate_effects(d, variant, {EstimatorKind::tmle}, models_for_arm(Arm::correct, variant));
        const auto& r = res.get(EstimatorKind::tmle);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.components[k].psi, truth.psi[k], 0.005) << to_string(variant);
        EXPECT_NEAR(r.effect("SDE").point, truth.sde, 0.005) << to_string(variant);
        EXPECT_NEAR(r.effect("SIE").point, truth.sie, 0.005) << to_string(variant);
    }
}
