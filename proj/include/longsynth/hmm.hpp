#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "longsynth/core.hpp"
#include "longsynth/parallel.hpp"
#include "longsynth/rng.hpp"
#include "longsynth/wasserstein.hpp"

namespace longsynth {

// Derives one categorical column by thresholding a numeric feature;
// labels.size() must be thresholds.size() + 1.
struct CategoricalRule {
    std::string source_feature;
    std::string column_name;
    std::vector<double> thresholds;
    std::vector<std::string> labels;

    void validate() const {
        if (labels.size() != thresholds.size() + 1) {
            throw std::invalid_argument("categorical rule: need one more label than thresholds");
        }
        if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
            throw std::invalid_argument("categorical rule: thresholds must be sorted");
        }
    }

    std::string bucket(double v) const {
        std::size_t idx = 0;
        while (idx < thresholds.size() && v >= thresholds[idx]) ++idx;
        return labels[idx];
    }
};

// Gaussian-emission hidden Markov model: initial distribution pi, row-
// stochastic transition matrix, and per-state multivariate normal emissions.
struct HmmSpec {
    std::vector<double> pi;
    Eigen::MatrixXd transition;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    std::vector<std::string> features;
    std::optional<CategoricalRule> categorical;

    std::size_t num_states() const { return pi.size(); }
    std::size_t num_features() const { return features.size(); }

    void validate() const {
        const std::size_t ns = num_states();
        const std::size_t nf = num_features();
        if (ns == 0 || nf == 0) throw std::invalid_argument("hmm: empty state or feature set");
        double pi_sum = 0.0;
        for (double p : pi) {
            if (p < 0.0) throw std::invalid_argument("hmm: negative initial probability");
            pi_sum += p;
        }
        if (std::abs(pi_sum - 1.0) > 1e-12) throw std::invalid_argument("hmm: pi does not sum to 1");
        if (transition.rows() != static_cast<Eigen::Index>(ns) ||
            transition.cols() != static_cast<Eigen::Index>(ns)) {
            throw std::invalid_argument("hmm: transition matrix shape mismatch");
        }
        for (std::size_t i = 0; i < ns; ++i) {
            double row_sum = 0.0;
            for (std::size_t j = 0; j < ns; ++j) {
                const double a = transition(i, j);
                if (a < 0.0) throw std::invalid_argument("hmm: negative transition probability");
                row_sum += a;
            }
            if (std::abs(row_sum - 1.0) > 1e-12) {
                throw std::invalid_argument("hmm: transition row " + std::to_string(i) + " does not sum to 1");
            }
        }
        if (means.size() != ns || covariances.size() != ns) {
            throw std::invalid_argument("hmm: per-state emission count mismatch");
        }
        for (std::size_t s = 0; s < ns; ++s) {
            if (means[s].size() != static_cast<Eigen::Index>(nf)) {
                throw std::invalid_argument("hmm: emission mean dimension mismatch");
            }
            const Eigen::MatrixXd& cov = covariances[s];
            if (cov.rows() != static_cast<Eigen::Index>(nf) || cov.cols() != static_cast<Eigen::Index>(nf)) {
                throw std::invalid_argument("hmm: covariance shape mismatch");
            }
            if (!cov.isApprox(cov.transpose(), 1e-10)) {
                throw std::invalid_argument("hmm: covariance not symmetric");
            }
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() != Eigen::Success) {
                throw std::invalid_argument("hmm: covariance not positive definite");
            }
        }
        if (categorical) {
            categorical->validate();
            if (std::find(features.begin(), features.end(), categorical->source_feature) == features.end()) {
                throw std::invalid_argument("hmm: categorical rule references unknown feature");
            }
        }
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["num_states"] = num_states();
        j["features"] = features;
        j["pi"] = pi;
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (Eigen::Index i = 0; i < transition.rows(); ++i) {
            std::vector<double> row(transition.cols());
            for (Eigen::Index k = 0; k < transition.cols(); ++k) row[k] = transition(i, k);
            a.push_back(row);
        }
        j["transition"] = a;
        nlohmann::ordered_json states = nlohmann::ordered_json::array();
        for (std::size_t s = 0; s < num_states(); ++s) {
            nlohmann::ordered_json st;
            st["mean"] = std::vector<double>(means[s].data(), means[s].data() + means[s].size());
            nlohmann::ordered_json cov = nlohmann::ordered_json::array();
            for (Eigen::Index i = 0; i < covariances[s].rows(); ++i) {
                std::vector<double> row(covariances[s].cols());
                for (Eigen::Index k = 0; k < covariances[s].cols(); ++k) row[k] = covariances[s](i, k);
                cov.push_back(row);
            }
            st["cov"] = cov;
            states.push_back(st);
        }
        j["states"] = states;
        if (categorical) {
            nlohmann::ordered_json rule;
            rule["source_feature"] = categorical->source_feature;
            rule["column_name"] = categorical->column_name;
            rule["thresholds"] = categorical->thresholds;
            rule["labels"] = categorical->labels;
            j["categorical_rule"] = rule;
        }
        return j;
    }

    static HmmSpec from_json(const nlohmann::json& j) {
        HmmSpec spec;
        spec.features = j.at("features").get<std::vector<std::string>>();
        spec.pi = j.at("pi").get<std::vector<double>>();
        const auto a = j.at("transition");
        const std::size_t ns = spec.pi.size();
        spec.transition.resize(ns, ns);
        for (std::size_t i = 0; i < ns; ++i) {
            const auto row = a.at(i).get<std::vector<double>>();
            for (std::size_t k = 0; k < ns; ++k) spec.transition(i, k) = row.at(k);
        }
        for (const auto& st : j.at("states")) {
            const auto mean = st.at("mean").get<std::vector<double>>();
            Eigen::VectorXd mu(mean.size());
            for (std::size_t i = 0; i < mean.size(); ++i) mu(i) = mean[i];
            spec.means.push_back(mu);
            const auto cov_rows = st.at("cov");
            Eigen::MatrixXd cov(mean.size(), mean.size());
            for (std::size_t i = 0; i < mean.size(); ++i) {
                const auto row = cov_rows.at(i).get<std::vector<double>>();
                for (std::size_t k = 0; k < mean.size(); ++k) cov(i, k) = row.at(k);
            }
            spec.covariances.push_back(cov);
        }
        if (j.contains("categorical_rule")) {
            const auto& rule = j.at("categorical_rule");
            CategoricalRule cr;
            cr.source_feature = rule.at("source_feature").get<std::string>();
            cr.column_name = rule.at("column_name").get<std::string>();
            cr.thresholds = rule.at("thresholds").get<std::vector<double>>();
            cr.labels = rule.at("labels").get<std::vector<std::string>>();
            spec.categorical = cr;
        }
        spec.validate();
        return spec;
    }
};

// Finite-support distribution over table lengths.
class LengthDistribution {
public:
    LengthDistribution() = default;

    explicit LengthDistribution(std::map<std::size_t, double> pmf) : pmf_(std::move(pmf)) {
        double total = 0.0;
        for (const auto& [len, p] : pmf_) {
            if (len < 1) throw std::invalid_argument("length distribution: lengths must be >= 1");
            if (p < 0.0) throw std::invalid_argument("length distribution: negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw std::invalid_argument("length distribution: probabilities must sum to 1");
        }
    }

    static LengthDistribution uniform(std::size_t lo, std::size_t hi) {
        if (lo < 1 || hi < lo) throw std::invalid_argument("length distribution: bad uniform range");
        std::map<std::size_t, double> pmf;
        const double p = 1.0 / static_cast<double>(hi - lo + 1);
        for (std::size_t len = lo; len <= hi; ++len) pmf[len] = p;
        return LengthDistribution(std::move(pmf));
    }

    static LengthDistribution from_counts(const std::map<std::size_t, double>& counts) {
        double total = 0.0;
        for (const auto& [len, c] : counts) total += std::max(0.0, c);
        if (total <= 0.0) throw std::invalid_argument("length distribution: no mass");
        std::map<std::size_t, double> pmf;
        for (const auto& [len, c] : counts) {
            if (c > 0.0) pmf[len] = c / total;
        }
        return LengthDistribution(std::move(pmf));
    }

    const std::map<std::size_t, double>& pmf() const { return pmf_; }

    std::size_t sample(RandomEngine& rng) const {
        if (pmf_.empty()) throw std::logic_error("length distribution: empty");
        const double r = rng.uniform01();
        double acc = 0.0;
        for (const auto& [len, p] : pmf_) {
            acc += p;
            if (r < acc) return len;
        }
        return pmf_.rbegin()->first;
    }

    std::size_t max_length() const {
        if (pmf_.empty()) throw std::logic_error("length distribution: empty");
        return pmf_.rbegin()->first;
    }

private:
    std::map<std::size_t, double> pmf_;
};

// Schema of sampled data: a numeric "timestep" column, the numeric emission
// features, then the derived categorical column when a rule is present.
inline Schema hmm_schema(const HmmSpec& spec, const std::optional<CategoricalRule>& rule) {
    std::vector<Column> columns;
    columns.push_back({"timestep", ColumnKind::Numeric, {}, false});
    for (const std::string& f : spec.features) columns.push_back({f, ColumnKind::Numeric, {}, false});
    if (rule) columns.push_back({rule->column_name, ColumnKind::Categorical, rule->labels, false});
    return Schema(std::move(columns));
}

inline std::vector<std::size_t> sample_state_path(const HmmSpec& spec, std::size_t length,
                                                  RandomEngine& rng) {
    std::vector<std::size_t> path;
    path.reserve(length);
    std::size_t state = rng.categorical(spec.pi);
    path.push_back(state);
    const std::size_t ns = spec.num_states();
    std::vector<double> row(ns);
    for (std::size_t t = 1; t < length; ++t) {
        for (std::size_t j = 0; j < ns; ++j) row[j] = spec.transition(state, j);
        state = rng.categorical(row);
        path.push_back(state);
    }
    return path;
}

inline Collection sample_collection(const HmmSpec& spec, std::size_t n,
                                    const LengthDistribution& lengths,
                                    const std::optional<CategoricalRule>& rule,
                                    std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("sample_collection: n must be >= 1");
    if (rule) {
        rule->validate();
        if (std::find(spec.features.begin(), spec.features.end(), rule->source_feature) ==
            spec.features.end()) {
            throw std::invalid_argument("sample_collection: rule references unknown feature");
        }
    }
    const std::size_t ns = spec.num_states();
    const std::size_t nf = spec.num_features();
    std::vector<Eigen::MatrixXd> chol(ns);
    for (std::size_t s = 0; s < ns; ++s) chol[s] = Eigen::LLT<Eigen::MatrixXd>(spec.covariances[s]).matrixL();
    const std::size_t source_idx =
        rule ? static_cast<std::size_t>(std::find(spec.features.begin(), spec.features.end(),
                                                  rule->source_feature) -
                                        spec.features.begin())
             : 0;

    Collection out;
    out.schema = hmm_schema(spec, rule);
    int width = 1;
    for (std::size_t v = n; v >= 10; v /= 10) ++width;
    for (std::size_t i = 0; i < n; ++i) {
        RandomEngine rng(derive_seed(seed, i));
        const std::size_t length = lengths.sample(rng);
        const auto states = sample_state_path(spec, length, rng);
        UserTable table;
        std::string id(static_cast<std::size_t>(width), '0');
        {
            std::string digits = std::to_string(i);
            id.replace(id.size() - digits.size(), digits.size(), digits);
        }
        table.user_id = "user_" + id;
        for (std::size_t t = 0; t < length; ++t) {
            Eigen::VectorXd z(nf);
            for (std::size_t f = 0; f < nf; ++f) z(f) = rng.normal();
            const Eigen::VectorXd obs = spec.means[states[t]] + chol[states[t]] * z;
            Row row;
            row.reserve(out.schema.size());
            row.push_back(Value::numeric(static_cast<double>(t)));
            for (std::size_t f = 0; f < nf; ++f) row.push_back(Value::numeric(obs(f)));
            if (rule) row.push_back(Value::categorical(rule->bucket(obs(source_idx))));
            table.rows.push_back(std::move(row));
        }
        out.tables.emplace(table.user_id, std::move(table));
    }
    return out;
}

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

struct GaussianScorer {
    Eigen::MatrixXd chol_lower;
    Eigen::VectorXd mean;
    double log_norm = 0.0;  // -0.5 * (k ln 2pi + ln |Sigma|)

    static GaussianScorer make(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
        GaussianScorer s;
        s.mean = mu;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) throw std::invalid_argument("gaussian: covariance not PD");
        s.chol_lower = llt.matrixL();
        double log_det = 0.0;
        for (Eigen::Index i = 0; i < s.chol_lower.rows(); ++i) log_det += std::log(s.chol_lower(i, i));
        log_det *= 2.0;
        s.log_norm = -0.5 * (static_cast<double>(mu.size()) * std::log(2.0 * M_PI) + log_det);
        return s;
    }

    double log_density(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd y = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
        return log_norm - 0.5 * y.squaredNorm();
    }
};

}  // namespace detail

// Log-likelihood of a table's feature rows under the HMM, computed with the
// forward recursion entirely in log space.
inline double forward_log_likelihood(const HmmSpec& spec, const Schema& schema,
                                     const UserTable& table) {
    const std::size_t ns = spec.num_states();
    const std::size_t nf = spec.num_features();
    std::vector<std::size_t> feature_cols;
    feature_cols.reserve(nf);
    for (const std::string& f : spec.features) feature_cols.push_back(schema.require_index(f));
    if (table.rows.empty()) throw std::invalid_argument("forward_log_likelihood: empty table");

    std::vector<detail::GaussianScorer> scorers;
    scorers.reserve(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        scorers.push_back(detail::GaussianScorer::make(spec.means[s], spec.covariances[s]));
    }

    auto observation = [&](std::size_t t) {
        Eigen::VectorXd x(nf);
        for (std::size_t f = 0; f < nf; ++f) {
            const Value& v = table.rows[t][feature_cols[f]];
            if (v.is_null()) {
                throw std::invalid_argument("forward_log_likelihood: Null in scored cell (row " +
                                            std::to_string(t) + ", column " + spec.features[f] + ")");
            }
            if (v.kind() != Value::Kind::Numeric) {
                throw std::invalid_argument("forward_log_likelihood: non-numeric scored cell in column " +
                                            spec.features[f]);
            }
            x(f) = v.number();
        }
        return x;
    };

    std::vector<double> alpha(ns);
    std::vector<double> next(ns);
    std::vector<double> terms(ns);
    Eigen::VectorXd x = observation(0);
    for (std::size_t s = 0; s < ns; ++s) {
        alpha[s] = (spec.pi[s] > 0.0 ? std::log(spec.pi[s]) : -std::numeric_limits<double>::infinity()) +
                   scorers[s].log_density(x);
    }
    for (std::size_t t = 1; t < table.rows.size(); ++t) {
        x = observation(t);
        for (std::size_t j = 0; j < ns; ++j) {
            for (std::size_t i = 0; i < ns; ++i) {
                const double a = spec.transition(i, j);
                terms[i] = alpha[i] + (a > 0.0 ? std::log(a) : -std::numeric_limits<double>::infinity());
            }
            next[j] = detail::log_sum_exp(terms) + scorers[j].log_density(x);
        }
        alpha.swap(next);
    }
    return detail::log_sum_exp(alpha);
}

struct LikelihoodDivergence {
    double w1 = 0.0;
    std::size_t real_scored = 0;
    std::size_t synth_scored = 0;
    std::size_t real_excluded = 0;
    std::size_t synth_excluded = 0;
};

// Per-table total log-likelihoods, in user id order; unscorable tables
// (Null in a scored cell) are skipped and counted.
inline std::vector<double> score_log_likelihoods(const HmmSpec& spec, const Collection& collection,
                                                 std::size_t* excluded, unsigned threads = 0) {
    std::vector<const UserTable*> tables;
    tables.reserve(collection.tables.size());
    for (const auto& [id, t] : collection.tables) tables.push_back(&t);
    std::vector<double> scores(tables.size(), std::numeric_limits<double>::quiet_NaN());
    parallel_for(
        tables.size(),
        [&](std::size_t i) {
            try {
                scores[i] = forward_log_likelihood(spec, collection.schema, *tables[i]);
            } catch (const std::invalid_argument&) {
                // unscorable table (Null in a scored cell); excluded below
            }
        },
        threads);
    std::vector<double> out;
    out.reserve(scores.size());
    std::size_t dropped = 0;
    for (double s : scores) {
        if (std::isnan(s)) ++dropped;
        else out.push_back(s);
    }
    if (excluded) *excluded = dropped;
    return out;
}

// W1 distance between the per-table total log-likelihood distributions of
// two collections; tables with unscorable rows are excluded and counted.
inline LikelihoodDivergence likelihood_divergence(const HmmSpec& spec, const Collection& real,
                                                  const Collection& synth, unsigned threads = 0) {
    LikelihoodDivergence result;
    const std::vector<double> real_scores =
        score_log_likelihoods(spec, real, &result.real_excluded, threads);
    const std::vector<double> synth_scores =
        score_log_likelihoods(spec, synth, &result.synth_excluded, threads);
    if (real_scores.empty() || synth_scores.empty()) {
        throw std::invalid_argument("likelihood_divergence: a side is empty after exclusions");
    }
    result.real_scored = real_scores.size();
    result.synth_scored = synth_scores.size();
    result.w1 = wasserstein1(real_scores, synth_scores);
    return result;
}

}  // namespace longsynth
