#pragma once

// Regression right-hand sides over the observed variables, e.g.
// "M + Z + W1 + W2 + Z:W2" or "Z*W1*W2". An intercept is always included.
// The token "W" expands to every baseline covariate as main effects.

#include "stochmed/dataset.hpp"
#include "stochmed/error.hpp"
#include "stochmed/linmod.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stochmed {

// Values forced onto A, Z or M when building a counterfactual design.
struct Setting {
    std::optional<double> a;
    std::optional<double> z;
    std::optional<double> m;
};

class ModelFormula {
public:
    using Term = std::vector<std::string>;

    ModelFormula() = default;
    explicit ModelFormula(std::vector<Term> terms) : terms_(std::move(terms)) {}

    static ModelFormula parse(const std::string& text, const std::vector<std::string>& w_names) {
        std::vector<Term> terms;
        auto add = [&terms](Term t) {
            if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(std::move(t));
        };
        for (const auto& raw : split(strip(text), '+')) {
            const std::string piece = strip(raw);
            if (piece.empty() || piece == "1") continue;
            if (piece == "W") {
                for (const auto& name : w_names) add(Term{name});
                continue;
            }
            if (piece.find('*') != std::string::npos) {
                std::vector<std::string> factors;
                for (const auto& f : split(piece, '*')) factors.push_back(strip(f));
                const std::size_t k = factors.size();
                // all non-empty sub-products, lower orders first
                for (std::size_t order = 1; order <= k; ++order)
                    for (unsigned mask = 1; mask < (1u << k); ++mask) {
                        if (static_cast<std::size_t>(__builtin_popcount(mask)) != order) continue;
                        Term t;
                        for (std::size_t j = 0; j < k; ++j)
                            if (mask & (1u << j)) t.push_back(factors[j]);
                        add(std::move(t));
                    }
                continue;
            }
            Term t;
            for (const auto& f : split(piece, ':')) t.push_back(strip(f));
            add(std::move(t));
        }
        for (const auto& t : terms)
            for (const auto& v : t) {
                if (v.empty()) throw ConfigError("malformed model formula: '" + text + "'");
                // a covariate literally named W is an ordinary variable
                if (v == "W" && std::find(w_names.begin(), w_names.end(), "W") == w_names.end())
                    throw ConfigError("'W' may only appear as a main effect in '" + text + "'");
            }
        return ModelFormula(std::move(terms));
    }

    static ModelFormula main_effects(const std::vector<std::string>& variables) {
        std::vector<Term> terms;
        for (const auto& v : variables) terms.push_back(Term{v});
        return ModelFormula(std::move(terms));
    }

    const std::vector<Term>& terms() const { return terms_; }
    Eigen::Index columns() const { return static_cast<Eigen::Index>(terms_.size()) + 1; }

    bool uses(const std::string& variable) const {
        return std::any_of(terms_.begin(), terms_.end(), [&](const Term& t) {
            return std::find(t.begin(), t.end(), variable) != t.end();
        });
    }

    // Throws unless every variable is one of `allowed` or a covariate name.
    void check_variables(const Dataset& data, const std::vector<std::string>& allowed,
                         const std::string& model) const {
        for (const auto& t : terms_)
            for (const auto& v : t) {
                const bool ok = std::find(allowed.begin(), allowed.end(), v) != allowed.end() ||
                                data.covariate_index(v).has_value();
                if (!ok) throw ConfigError(model + " model: variable '" + v + "' is not allowed here");
            }
    }

    DesignMatrix design(const Dataset& data, const Setting& setting = {}) const {
        const Eigen::Index n = data.size();
        Matrix x(n, columns());
        x.col(0).setOnes();
        for (std::size_t k = 0; k < terms_.size(); ++k) {
            auto col = x.col(static_cast<Eigen::Index>(k) + 1);
            col.setOnes();
            for (const auto& v : terms_[k]) col.array() *= column(data, v, setting).array();
        }
        return DesignMatrix(std::move(x));
    }

    std::string to_string() const {
        std::string out = "1";
        for (const auto& t : terms_) {
            out += " + ";
            for (std::size_t j = 0; j < t.size(); ++j) out += (j ? ":" : "") + t[j];
        }
        return out;
    }

private:
    static Vector column(const Dataset& data, const std::string& v, const Setting& s) {
        const Eigen::Index n = data.size();
        if (v == "A") return s.a ? Vector::Constant(n, *s.a) : data.a;
        if (v == "Z") return s.z ? Vector::Constant(n, *s.z) : data.z;
        if (v == "M") return s.m ? Vector::Constant(n, *s.m) : data.m;
        if (auto j = data.covariate_index(v)) return data.w.col(*j);
        throw ConfigError("unknown variable '" + v + "' in model formula");
    }

    static std::string strip(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, sep)) out.push_back(item);
        if (!s.empty() && s.back() == sep) out.emplace_back();
        return out;
    }

    std::vector<Term> terms_;
};

}  // namespace stochmed
