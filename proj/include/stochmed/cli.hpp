#pragma once

// Command-line driver: `estimate`, `simulate` and `dgm`.
//
// Every option can also come from a flat JSON object given with --config; keys
// are option names without the leading dashes and the command line wins.

#include "stochmed/config.hpp"
#include "stochmed/csv.hpp"
#include "stochmed/effects.hpp"
#include "stochmed/error.hpp"
#include "stochmed/simlab.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stochmed {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kExitEstimation = 1;
inline constexpr int kExitConfig = 2;

struct RunConfig {
    std::string command;
    std::string input;
    std::string output = "-";
    std::string format;          // empty: json for estimate, csv otherwise
    std::string estimator = "all";
    std::string variant = "iv";
    std::string variance = "ic";
    std::string flavor = "data-dependent";
    int boot_reps = 500;
    std::uint64_t seed = 20190101;
    std::vector<long> sizes{5000};
    int reps = 1000;
    std::uint64_t replicate = 0;
    std::string arm = "correct";
    double truncation = 1e-3;
    std::string cols;
    int a = 1;
    int a_star = 0;
    bool percentile = false;
    bool pct_bias_per_replicate = false;
    ModelSpec models;
    std::string policy_g0, policy_g1;
    std::string save_policy_g0, save_policy_g1;
};

/// Parses "A=treat,Z=z,M=med,Y=out,W=w1,w2,sel=keep". A token without '='
/// continues the list of the previous key, which only W accepts.
inline ColumnMapping parse_cols(const std::string& text) {
    ColumnMapping map;
    if (text.empty()) return map;
    std::string last;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = detail::trim_field(token);
        if (token.empty()) continue;
        const auto eq = token.find('=');
        std::string key, value;
        if (eq == std::string::npos) {
            if (last != "W") throw ConfigError("--cols: '" + token + "' has no key");
            key = "W";
            value = token;
        } else {
            key = token.substr(0, eq);
            value = token.substr(eq + 1);
        }
        if (value.empty()) throw ConfigError("--cols: empty column name for " + key);
        if (key == "A")
            map.a = value;
        else if (key == "Z")
            map.z = value;
        else if (key == "M")
            map.m = value;
        else if (key == "Y")
            map.y = value;
        else if (key == "W")
            map.w.push_back(value);
        else if (key == "sel")
            map.selection = value;
        else
            throw ConfigError("--cols: unknown key '" + key + "'");
        last = key;
    }
    return map;
}

inline std::vector<EstimatorKind> parse_estimator_set(const std::string& s) {
    if (s == "all") return {kAllEstimators.begin(), kAllEstimators.end()};
    return {parse_estimator(s)};
}

// Flat JSON object -> CLI11 config items.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        nlohmann::json j = nlohmann::json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const std::string name = opt->get_lnames().front();
            if (opt->count() > 0)
                j[name] = opt->as<std::string>();
            else if (default_also && !opt->get_default_str().empty())
                j[name] = opt->get_default_str();
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            CLI::ConfigItem item;
            item.name = key;
            auto text = [](const nlohmann::json& v) -> std::string {
                if (v.is_string()) return v.get<std::string>();
                if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
                if (v.is_number() || v.is_null()) return v.dump();
                throw CLI::ConversionError("config values must be scalars or arrays of scalars");
            };
            if (value.is_array()) {
                std::string joined;
                for (const auto& v : value) joined += (joined.empty() ? "" : ",") + text(v);
                item.inputs = {joined};
            } else {
                item.inputs = {text(value)};
            }
            items.push_back(std::move(item));
        }
        return items;
    }
};

inline void add_options(CLI::App& app, RunConfig& cfg) {
    app.add_option("command", cfg.command, "estimate | simulate | dgm")
        ->required()
        ->check(CLI::IsMember({"estimate", "simulate", "dgm"}));
    app.set_config("--config", "", "JSON file of option values (command-line flags take precedence)");
    app.config_formatter(std::make_shared<JsonConfig>());

    app.add_option("--input", cfg.input, "input CSV (estimate)");
    app.add_option("--output", cfg.output, "output path, '-' for standard output");
    app.add_option("--format", cfg.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--estimator", cfg.estimator, "tmle | iptw | ee | all")
        ->check(CLI::IsMember({"tmle", "iptw", "ee", "all"}));
    app.add_option("--variant", cfg.variant, "iv | nonrandom-a | direct-ae")
        ->check(CLI::IsMember({"iv", "nonrandom-a", "direct-ae"}));
    app.add_option("--variance", cfg.variance, "ic | bootstrap")->check(CLI::IsMember({"ic", "bootstrap"}));
    app.add_option("--flavor", cfg.flavor, "fixed | data-dependent")
        ->check(CLI::IsMember({"fixed", "data-dependent"}));
    app.add_option("--boot-reps", cfg.boot_reps, "bootstrap replicates");
    app.add_option("--seed", cfg.seed, "random seed");
    app.add_option("--n", cfg.sizes, "sample size(s), comma separated")->delimiter(',');
    app.add_option("--reps", cfg.reps, "simulation replicates");
    app.add_option("--replicate", cfg.replicate, "replicate index drawn by dgm");
    app.add_option("--arm", cfg.arm, "correct | missy | missm")->check(CLI::IsMember({"correct", "missy", "missm"}));
    app.add_option("--truncation", cfg.truncation, "probability truncation level");
    app.add_option("--cols", cfg.cols, "column mapping A=..,Z=..,M=..,Y=..,W=..,sel=..");
    app.add_option("--a", cfg.a, "treatment level a");
    app.add_option("--a-star", cfg.a_star, "reference level a*");
    app.add_flag("--percentile", cfg.percentile, "percentile bootstrap intervals");
    app.add_flag("--pct-bias-per-replicate", cfg.pct_bias_per_replicate, "average per-replicate %bias ratios");
    app.add_option("--outcome-model", cfg.models.outcome, "formula for Y");
    app.add_option("--mediator-model", cfg.models.mediator, "formula for M");
    app.add_option("--confounder-model", cfg.models.confounder, "formula for Z");
    app.add_option("--stratum-model", cfg.models.stratum, "formula for the final regression on W");
    app.add_option("--treatment-model", cfg.models.treatment, "formula for A (nonrandom-a)");
    app.add_option("--policy-g0", cfg.policy_g0, "external policy CSV for a*=0");
    app.add_option("--policy-g1", cfg.policy_g1, "external policy CSV for a*=1");
    app.add_option("--save-policy-g0", cfg.save_policy_g0, "write the a*=0 policy used");
    app.add_option("--save-policy-g1", cfg.save_policy_g1, "write the a*=1 policy used");
}

inline void validate(const RunConfig& cfg) {
    if (!(cfg.truncation > 0.0 && cfg.truncation <= 0.1)) throw ConfigError("truncation must lie in (0, 0.1]");
    check_level(cfg.a, "a");
    check_level(cfg.a_star, "a*");
    if (cfg.a == cfg.a_star) throw ConfigError("a and a* must differ");
    if (cfg.variance == "bootstrap" && cfg.boot_reps < 2) throw ConfigError("bootstrap needs at least 2 replicates");
    if (cfg.sizes.empty()) throw ConfigError("no sample size given");
    for (long n : cfg.sizes)
        if (n < 1) throw ConfigError("sample sizes must be positive");
    if (cfg.command == "estimate" && cfg.input.empty()) throw ConfigError("estimate needs --input");
    if (cfg.command == "estimate" && cfg.format == "csv") throw ConfigError("estimate writes JSON only");
    if (cfg.command == "dgm" && cfg.format == "json") throw ConfigError("dgm writes CSV only");
    if (cfg.command == "dgm" && cfg.sizes.size() != 1) throw ConfigError("dgm takes a single --n");
}

inline nlohmann::json error_json(const std::string& kind, const std::string& message) {
    return {{"schema_version", kSchemaVersion}, {"error", {{"kind", kind}, {"message", message}}}};
}

namespace detail {

// Writes `text` to the configured output, or to `out` for "-".
inline void emit(const RunConfig& cfg, const std::string& text, std::ostream& out) {
    if (cfg.output == "-") {
        out << text;
        return;
    }
    std::ofstream f(cfg.output, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + cfg.output + "'");
    f << text;
}

inline nlohmann::json summary(const Vector& v) {
    return {{"min", v.minCoeff()}, {"max", v.maxCoeff()}};
}

inline void save_policy(const std::string& path, const InterventionPolicy& p) {
    if (path.empty()) return;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    write_policy_csv(p, f);
}

}  // namespace detail

inline nlohmann::json estimate_to_json(const EffectsResult& res, const RunConfig& cfg,
                                       const std::vector<std::string>& notices) {
    nlohmann::json estimates = nlohmann::json::array();
    nlohmann::json diagnostics = nlohmann::json::array();
    for (const auto& r : res.estimators) {
        for (const auto& e : r.effects)
            estimates.push_back({{"estimator", to_string(e.estimator)},
                                 {"estimand", e.estimand},
                                 {"point", e.point},
                                 {"se", e.se},
                                 {"ci_lower", e.lower},
                                 {"ci_upper", e.upper},
                                 {"variance", to_string(e.method)},
                                 {"replicates", e.replicates},
                                 {"failures", e.failures}});
        for (const auto& c : r.components) {
            nlohmann::json d{{"estimator", to_string(r.estimator)},
                             {"estimand", c.label},
                             {"epsilon_y", c.epsilon_y},
                             {"epsilon_z", c.epsilon_z},
                             {"mean_d1", c.d1.size() ? c.d1.mean() : 0.0},
                             {"mean_d2", c.d2.size() ? c.d2.mean() : 0.0},
                             {"h1", detail::summary(c.h1)},
                             {"converged", c.converged}};
            diagnostics.push_back(std::move(d));
        }
    }
    auto policy = [](const InterventionPolicy& p) {
        return nlohmann::json{{"a_star", p.a_star},
                              {"source", p.source == PolicySource::external ? "external" : "estimated"},
                              {"min", p.g.minCoeff()},
                              {"max", p.g.maxCoeff()},
                              {"mean", p.g.mean()}};
    };
    return {{"schema_version", kSchemaVersion},
            {"command", "estimate"},
            {"variant", to_string(res.variant)},
            {"n", res.n},
            {"a", res.a},
            {"a_star", res.a_star},
            {"variance", cfg.variance},
            {"seed", cfg.seed},
            {"truncation", cfg.truncation},
            {"estimates", estimates},
            {"diagnostics", {{"fits", diagnostics}, {"policies", {policy(res.policy_a_star), policy(res.policy_a)}}}},
            {"notices", notices}};
}

inline void run_estimate(const RunConfig& cfg, std::ostream& out) {
    std::vector<std::string> notices;
    const Dataset data = ingest_csv(cfg.input, parse_cols(cfg.cols), &notices);
    ModelSpec spec = cfg.models;
    spec.truncation = cfg.truncation;
    EffectsOptions opts;
    opts.a = cfg.a;
    opts.a_star = cfg.a_star;
    opts.variance = parse_variance(cfg.variance);
    opts.boot_reps = cfg.boot_reps;
    opts.seed = cfg.seed;
    opts.percentile_ci = cfg.percentile;
    if (!cfg.policy_g0.empty()) opts.policies.g0 = load_external_policy_csv(cfg.policy_g0, 0);
    if (!cfg.policy_g1.empty()) opts.policies.g1 = load_external_policy_csv(cfg.policy_g1, 1);

    const auto res = estimate_effects(data, parse_variant(cfg.variant), parse_estimator_set(cfg.estimator), spec, opts);
    const auto& g0 = res.a_star == 0 ? res.policy_a_star : res.policy_a;
    const auto& g1 = res.a_star == 1 ? res.policy_a_star : res.policy_a;
    detail::save_policy(cfg.save_policy_g0, g0);
    detail::save_policy(cfg.save_policy_g1, g1);
    detail::emit(cfg, estimate_to_json(res, cfg, notices).dump(2) + "\n", out);
}

inline void run_simulate(const RunConfig& cfg, std::ostream& out) {
    StudyConfig study;
    study.dgm.arm = parse_arm(cfg.arm);
    study.dgm.replicates = cfg.reps;
    study.dgm.seed = cfg.seed;
    study.sizes.assign(cfg.sizes.begin(), cfg.sizes.end());
    study.estimators = parse_estimator_set(cfg.estimator);
    study.variant = parse_variant(cfg.variant);
    study.variance = parse_variance(cfg.variance);
    study.flavor = parse_flavor(cfg.flavor);
    study.boot_reps = cfg.boot_reps;
    study.truncation = cfg.truncation;
    study.pct_bias_per_replicate = cfg.pct_bias_per_replicate;
    const ModelSpec& m = cfg.models;
    if (!m.outcome.empty() || !m.mediator.empty() || !m.confounder.empty() || !m.stratum.empty() ||
        !m.treatment.empty()) {
        ModelSpec s = models_for_arm(study.dgm.arm, study.variant);
        if (!m.outcome.empty()) s.outcome = m.outcome;
        if (!m.mediator.empty()) s.mediator = m.mediator;
        if (!m.confounder.empty()) s.confounder = m.confounder;
        if (!m.stratum.empty()) s.stratum = m.stratum;
        if (!m.treatment.empty()) s.treatment = m.treatment;
        study.models = s;
    }
    const auto report = run_study(study);
    if (cfg.format == "json") {
        detail::emit(cfg, report_to_json(report).dump(2) + "\n", out);
    } else {
        std::ostringstream csv;
        write_report_csv(report, csv);
        detail::emit(cfg, csv.str(), out);
    }
}

// Every drawn row, selected or not, with the selection indicator in `sel`.
inline void write_draws_csv(const DgmDraws& d, std::ostream& out) {
    out << "W1,W2,A,Z,M,Y,sel\n";
    for (std::size_t i = 0; i < d.size(); ++i)
        out << d.w1[i] << ',' << d.w2[i] << ',' << d.a[i] << ',' << d.z[i] << ',' << d.m[i] << ',' << d.y[i] << ','
            << d.selected[i] << '\n';
}

inline void run_dgm(const RunConfig& cfg, std::ostream& out) {
    DgmSpec spec;
    spec.n = cfg.sizes.front();
    spec.seed = cfg.seed;
    std::ostringstream csv;
    write_draws_csv(draw_dgm(spec, cfg.replicate), csv);
    detail::emit(cfg, csv.str(), out);
}

inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        validate(cfg);
        if (cfg.command == "estimate")
            run_estimate(cfg, out);
        else if (cfg.command == "simulate")
            run_simulate(cfg, out);
        else if (cfg.command == "dgm")
            run_dgm(cfg, out);
        else
            throw ConfigError("unknown command '" + cfg.command + "'");
        return 0;
    } catch (const ConfigError& e) {
        err << error_json("config", e.what()).dump() << '\n';
        return kExitConfig;
    } catch (const EstimationError& e) {
        err << error_json("estimation", e.what()).dump() << '\n';
        return kExitEstimation;
    } catch (const std::invalid_argument& e) {
        err << error_json("config", e.what()).dump() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << error_json("estimation", e.what()).dump() << '\n';
        return kExitEstimation;
    }
}

/// Full entry point; args excludes the program name.
inline int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stochastic direct and indirect effects with an intermediate confounder", "stochmed"};
    RunConfig cfg;
    add_options(app, cfg);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json("config", e.what()).dump() << '\n';
        return kExitConfig;
    }
    return run(cfg, out, err);
}

}  // namespace stochmed
