#include "stochmed/intervention.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace stochmed;
using testing_support::vec;

TEST(CombinePolicy, CollapsesWhenMediatorIgnoresConfounder) {
    const Vector g = combine_policy(vec({0.3, 0.6}), vec({0.3, 0.6}), vec({0.1, 0.9}));
    EXPECT_DOUBLE_EQ(g[0], 0.3);
    EXPECT_DOUBLE_EQ(g[1], 0.6);
}

TEST(CombinePolicy, WorkedValues) {
    EXPECT_NEAR(combine_policy(vec({0.8}), vec({0.2}), vec({0.5}))[0], 0.5, 1e-15);
    EXPECT_NEAR(combine_policy(vec({0.9}), vec({0.1}), vec({0.75}))[0], 0.7, 1e-15);
}

TEST(FitIntervention, NoSupportForLevel) {
    const Dataset d = testing_support::make_dataset({1, 1, 1, 1}, {0, 1, 0, 1}, {0, 1, 1, 0}, {0, 1, 0, 1},
                                                    {0, 0, 1, 1});
    try {
        fit_intervention(d, 0, ScmVariant::iv, ModelSpec{});
        FAIL() << "expected an error";
    } catch (const EstimationError& e) {
        EXPECT_NE(std::string(e.what()).find("no support for instrument level"), std::string::npos);
    }
}

TEST(ExternalPolicy, ValidatesOpenInterval) {
    const auto p = load_external_policy(Vector::Constant(5, 0.5), 1);
    EXPECT_EQ(p.source, PolicySource::external);
    EXPECT_EQ(p.a_star, 1);
    EXPECT_THROW(load_external_policy(vec({0.5, 1.0}), 0), ConfigError);
    EXPECT_THROW(load_external_policy(vec({0.0, 0.5}), 0), ConfigError);
    EXPECT_THROW(load_external_policy(vec({0.5}), 2), ConfigError);
}

TEST(ExternalPolicy, CsvRoundTripIsExact) {
    std::mt19937_64 rng(3);
    const Dataset d = testing_support::random_small_dataset(rng, 100);
    const auto fitted = fit_intervention(d, 0, ScmVariant::iv, ModelSpec{});
    std::stringstream ss;
    write_policy_csv(fitted, ss);
    const auto back = load_external_policy(read_policy_csv(ss), 0);
    ASSERT_EQ(back.size(), fitted.size());
    for (Eigen::Index i = 0; i < back.size(); ++i) EXPECT_EQ(back.g[i], fitted.g[i]);
}

TEST(ExternalPolicy, RejectsBadHeader) {
    std::stringstream ss("g\n0.5\n");
    EXPECT_THROW(read_policy_csv(ss), ConfigError);
}

TEST(InterventionProperty, ConvexCombinationOfMediatorLaws) {
    std::mt19937_64 rng(4);
    for (int c = 0; c < 20; ++c) {
        const Dataset d = testing_support::random_small_dataset(rng, 80);
        const auto parsed = parse_models(ModelSpec{}, d, ScmVariant::iv);
        const auto models = fit_mediation_models(d, ScmVariant::iv, parsed, 1e-3);
        for (int as = 0; as <= 1; ++as) {
            const Vector gm1 = models.mediator.predict(d, Setting{std::nullopt, 1.0, std::nullopt});
            const Vector gm0 = models.mediator.predict(d, Setting{std::nullopt, 0.0, std::nullopt});
            const Vector g = combine_policy(gm1, gm0, models.confounder.predict(d, as));
            for (Eigen::Index i = 0; i < d.size(); ++i) {
                EXPECT_LE(std::min(gm0[i], gm1[i]), g[i] + 1e-15);
                EXPECT_GE(std::max(gm0[i], gm1[i]), g[i] - 1e-15);
            }
        }
    }
}

TEST(InterventionProperty, NoConfounderShiftGivesEqualPolicies) {
    std::mt19937_64 rng(5);
    const Dataset d = testing_support::random_small_dataset(rng, 200);
    ModelSpec spec;
    spec.confounder = "W";  // Z does not depend on A
    const auto g0 = fit_intervention(d, 0, ScmVariant::iv, spec);
    const auto g1 = fit_intervention(d, 1, ScmVariant::iv, spec);
    for (Eigen::Index i = 0; i < d.size(); ++i) EXPECT_EQ(g0.g[i], g1.g[i]);
}

TEST(InterventionProperty, SaturatedModelsMatchEmpiricalPlugIn) {
    std::mt19937_64 rng(6);
    for (int c = 0; c < 10; ++c) {
        const Dataset d = testing_support::random_small_dataset(rng, 60);
        ModelSpec spec;
        spec.mediator = "Z*W";
        spec.confounder = "A*W";
        spec.truncation = 1e-9;
        for (int as = 0; as <= 1; ++as) {
            const auto g = fit_intervention(d, as, ScmVariant::iv, spec);
            for (Eigen::Index i = 0; i < d.size(); ++i) {
                const double w = d.w(i, 0);
                double expected = 0.0;
                for (int z = 0; z <= 1; ++z) {
                    double m1 = 0, nz = 0, zz = 0, na = 0;
                    for (Eigen::Index j = 0; j < d.size(); ++j) {
                        if (d.w(j, 0) != w) continue;
                        if (d.z[j] == z) {
                            nz += 1;
                            m1 += d.m[j];
                        }
                        if (d.a[j] == as) {
                            na += 1;
                            zz += d.z[j] == z ? 1 : 0;
                        }
                    }
                    expected += (m1 / nz) * (zz / na);
                }
                EXPECT_NEAR(g.g[i], expected, 1e-8);
            }
        }
    }
}

TEST(DirectEffectVariant, MediatorPolicyUsesReferenceLevel) {
    std::mt19937_64 rng(7);
    const Dataset d = testing_support::random_small_dataset(rng, 300);
    ModelSpec spec;
    const auto g_iv = fit_intervention(d, 0, ScmVariant::iv, spec);
    const auto g_ae = fit_intervention(d, 0, ScmVariant::direct_ae, spec);
    // A enters the mediator model only in the direct-effect variant
    EXPECT_GT((g_iv.g - g_ae.g).cwiseAbs().maxCoeff(), 1e-6);
}
