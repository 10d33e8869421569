#include "stochmed/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stochmed;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("stochmed_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
    }

    static std::string read(const std::string& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    int run(const std::vector<std::string>& args) {
        out_.str("");
        err_.str("");
        return main_entry(args, out_, err_);
    }

    // dgm draw written to disk, returned path
    std::string dgm_file(int n, std::uint64_t seed) {
        const std::string p = path("dgm_" + std::to_string(n) + "_" + std::to_string(seed) + ".csv");
        EXPECT_EQ(run({"dgm", "--n", std::to_string(n), "--seed", std::to_string(seed), "--output", p}), 0);
        return p;
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

const std::string kDgmCols = "A=A,Z=Z,M=M,Y=Y,W=W1,W2,sel=sel";

}  // namespace

TEST(ParseCols, FullMapping) {
    const auto m = parse_cols("A=treat,Z=z,M=med,Y=out,W=w1,w2,w3,sel=keep");
    EXPECT_EQ(m.a, "treat");
    EXPECT_EQ(m.y, "out");
    EXPECT_EQ(m.w, (std::vector<std::string>{"w1", "w2", "w3"}));
    ASSERT_TRUE(m.selection);
    EXPECT_EQ(*m.selection, "keep");
}

TEST(ParseCols, Errors) {
    EXPECT_THROW(parse_cols("A=a,b"), ConfigError);
    EXPECT_THROW(parse_cols("Q=a"), ConfigError);
    EXPECT_THROW(parse_cols("A="), ConfigError);
}

TEST_F(CliTest, IngestToyFile) {
    write("toy.csv", "W,A,Z,M,Y\n0,1,0,1,1\n1,0,1,0,0\n0,1,1,1,0\n1,0,0,0,1\n");
    const Dataset d = ingest_csv(path("toy.csv"), ColumnMapping{});
    EXPECT_EQ(d.size(), 4);
    EXPECT_EQ(d.w_names, std::vector<std::string>{"W"});
    EXPECT_EQ(d.a[0], 1.0);
}

TEST_F(CliTest, IngestRejectsNonBinaryTreatment) {
    write("bad.csv", "W,A,Z,M,Y\n0,1,0,1,1\n1,0,1,0,0\n0,2,1,1,0\n1,0,0,0,1\n");
    try {
        ingest_csv(path("bad.csv"), ColumnMapping{});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_STREQ(e.what(), "row 3: A not in {0,1}");
    }
}

TEST_F(CliTest, IngestRejectsMissingValues) {
    write("na.csv", "W,A,Z,M,Y\n0,1,0,1,1\n1,0,NA,0,0\n");
    try {
        ingest_csv(path("na.csv"), ColumnMapping{});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_STREQ(e.what(), "row 2: missing value in Z");
    }
}

TEST_F(CliTest, IngestBoundsContinuousOutcome) {
    write("cont.csv", "W,A,Z,M,Y\n0,1,0,1,10\n1,0,1,0,20\n0,1,1,1,15\n1,0,0,0,30\n");
    std::vector<std::string> notices;
    const Dataset d = ingest_csv(path("cont.csv"), ColumnMapping{}, &notices);
    EXPECT_TRUE(d.outcome_scale.active);
    EXPECT_DOUBLE_EQ(d.y[2], 0.25);
    EXPECT_DOUBLE_EQ(d.outcome_scale.to_original(d.y[2]), 15.0);
    ASSERT_EQ(notices.size(), 1u);
}

TEST_F(CliTest, IngestAppliesSelection) {
    write("sel.csv", "W,A,Z,M,Y,keep\n0,1,0,1,1,1\n1,NA,NA,NA,NA,0\n0,1,1,1,0,1\n");
    ColumnMapping m;
    m.selection = "keep";
    const Dataset d = ingest_csv(path("sel.csv"), m);
    EXPECT_EQ(d.size(), 2);
    EXPECT_EQ(d.w_names, std::vector<std::string>{"W"});
}

TEST_F(CliTest, DgmRoundTripGivesIdenticalEstimates) {
    const std::string file = dgm_file(800, 11);
    const Dataset read_back = ingest_csv(file, parse_cols(kDgmCols));
    DgmSpec spec;
    spec.n = 800;
    spec.seed = 11;
    const Dataset direct = generate_dgm(spec, 0);
    ASSERT_EQ(read_back.size(), direct.size());
    const std::vector<EstimatorKind> all{kAllEstimators.begin(), kAllEstimators.end()};
    const auto a = estimate_effects(read_back, ScmVariant::iv, all, ModelSpec{});
    const auto b = estimate_effects(direct, ScmVariant::iv, all, ModelSpec{});
    for (std::size_t e = 0; e < 3; ++e)
        for (std::size_t k = 0; k < 5; ++k) {
            EXPECT_EQ(a.estimators[e].effects[k].point, b.estimators[e].effects[k].point);
            EXPECT_EQ(a.estimators[e].effects[k].se, b.estimators[e].effects[k].se);
        }
}

TEST_F(CliTest, EstimateWritesVersionedJson) {
    const std::string file = dgm_file(600, 3);
    ASSERT_EQ(run({"estimate", "--input", file, "--cols", kDgmCols}), 0) << err_.str();
    const auto j = nlohmann::json::parse(out_.str());
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    EXPECT_EQ(j["n"], 600);
    EXPECT_EQ(j["estimates"].size(), 15u);
    EXPECT_EQ(j["diagnostics"]["fits"].size(), 9u);
    for (const auto& e : j["estimates"]) {
        EXPECT_LE(e["ci_lower"].get<double>(), e["point"].get<double>());
        EXPECT_GE(e["ci_upper"].get<double>(), e["point"].get<double>());
    }
    for (const auto& f : j["diagnostics"]["fits"]) {
        EXPECT_TRUE(f.contains("epsilon_y"));
        EXPECT_TRUE(f["h1"].contains("max"));
    }
}

TEST_F(CliTest, EqualPoliciesGiveZeroIndirectEffectInJson) {
    const std::string file = dgm_file(500, 4);
    ASSERT_EQ(run({"estimate", "--input", file, "--cols", kDgmCols, "--estimator", "tmle", "--confounder-model",
                   "W1 + W2"}),
              0)
        << err_.str();
    const auto j = nlohmann::json::parse(out_.str());
    bool found = false;
    for (const auto& e : j["estimates"])
        if (e["estimand"] == "SIE") {
            EXPECT_EQ(e["point"].get<double>(), 0.0);
            found = true;
        }
    EXPECT_TRUE(found);
}

TEST_F(CliTest, FixedSeedGivesByteIdenticalFiles) {
    const std::string file = dgm_file(300, 5);
    for (const std::string out : {"e1.json", "e2.json"})
        ASSERT_EQ(run({"estimate", "--input", file, "--cols", kDgmCols, "--variance", "bootstrap", "--boot-reps", "10",
                       "--seed", "9", "--output", path(out)}),
                  0)
            << err_.str();
    EXPECT_EQ(read(path("e1.json")), read(path("e2.json")));
    for (const std::string out : {"s1.csv", "s2.csv"})
        ASSERT_EQ(run({"simulate", "--n", "200", "--reps", "4", "--seed", "2", "--output", path(out)}), 0);
    EXPECT_EQ(read(path("s1.csv")), read(path("s2.csv")));
    EXPECT_EQ(read(dgm_file(300, 5)), read(file));
}

TEST_F(CliTest, SimulateHasTableShape) {
    ASSERT_EQ(run({"simulate", "--n", "400,300,200", "--reps", "3", "--format", "json"}), 0) << err_.str();
    const auto j = nlohmann::json::parse(out_.str());
    EXPECT_EQ(j["rows"].size(), 18u);
    EXPECT_EQ(j["schema_version"], 1);
}

TEST_F(CliTest, ConfigFileWithCommandLineOverride) {
    const std::string file = dgm_file(400, 6);
    write("cfg.json", "{\"estimator\": \"iptw\", \"cols\": \"" + kDgmCols + "\", \"input\": \"" + file + "\"}");
    ASSERT_EQ(run({"estimate", "--config", path("cfg.json")}), 0) << err_.str();
    auto j = nlohmann::json::parse(out_.str());
    EXPECT_EQ(j["estimates"][0]["estimator"], "iptw");
    ASSERT_EQ(run({"estimate", "--config", path("cfg.json"), "--estimator", "ee"}), 0) << err_.str();
    j = nlohmann::json::parse(out_.str());
    EXPECT_EQ(j["estimates"][0]["estimator"], "ee");
    EXPECT_EQ(j["estimates"].size(), 5u);
}

TEST_F(CliTest, ExternalPolicyRoundTrip) {
    const std::string file = dgm_file(500, 8);
    ASSERT_EQ(run({"estimate", "--input", file, "--cols", kDgmCols, "--save-policy-g0", path("g0.csv"),
                   "--save-policy-g1", path("g1.csv")}),
              0);
    auto first = nlohmann::json::parse(out_.str());
    ASSERT_EQ(run({"estimate", "--input", file, "--cols", kDgmCols, "--policy-g0", path("g0.csv"), "--policy-g1",
                   path("g1.csv")}),
              0)
        << err_.str();
    auto second = nlohmann::json::parse(out_.str());
    EXPECT_EQ(first["estimates"], second["estimates"]);
    EXPECT_EQ(second["diagnostics"]["policies"][0]["source"], "external");
}

TEST_F(CliTest, ExitCodes) {
    EXPECT_EQ(run({"estimate"}), kExitConfig);
    EXPECT_EQ(run({"estimate", "--input", path("missing.csv")}), kExitConfig);
    EXPECT_EQ(nlohmann::json::parse(err_.str())["error"]["kind"], "config");
    EXPECT_EQ(run({"simulate", "--truncation", "0.5"}), kExitConfig);
    EXPECT_EQ(run({"simulate", "--estimator", "mle"}), kExitConfig);
    EXPECT_EQ(run({"frobnicate"}), kExitConfig);
    write("one_level.csv", "W,A,Z,M,Y\n0,1,0,1,1\n1,1,1,0,0\n0,1,1,1,0\n1,1,0,0,1\n");
    EXPECT_EQ(run({"estimate", "--input", path("one_level.csv")}), kExitEstimation);
    const auto j = nlohmann::json::parse(err_.str());
    EXPECT_EQ(j["error"]["kind"], "estimation");
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
}
