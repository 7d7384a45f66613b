#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "longsynth/accounting.hpp"
#include "longsynth/core.hpp"
#include "longsynth/discretize.hpp"
#include "longsynth/flatten.hpp"
#include "longsynth/rng.hpp"

namespace longsynth {

// A 1- or 2-way marginal over flat-schema column indices.
struct MarginalQuery {
    std::vector<std::size_t> columns;

    friend bool operator==(const MarginalQuery& a, const MarginalQuery& b) {
        return a.columns == b.columns;
    }
    friend bool operator<(const MarginalQuery& a, const MarginalQuery& b) {
        return a.columns < b.columns;
    }
};

enum class SelectionVariant { Markov, Across };

inline SelectionVariant selection_variant_from_string(std::string_view s) {
    if (s == "markov") return SelectionVariant::Markov;
    if (s == "across") return SelectionVariant::Across;
    throw std::invalid_argument("unknown variant: " + std::string(s));
}

// Fixed, heuristic marginal workload on a d x L flat schema. Markov: every
// 1-way marginal plus the adjacent-time 2-way marginal of each feature with
// itself. Across additionally samples up to max_across same-timestep
// cross-feature pairs.
inline std::vector<MarginalQuery> select_marginals(std::size_t d, std::size_t L,
                                                   SelectionVariant variant, std::size_t max_across,
                                                   std::uint64_t seed) {
    if (d * L < 1) throw std::invalid_argument("select_marginals: empty flat schema");
    std::vector<MarginalQuery> queries;
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t j = 0; j < d; ++j) queries.push_back({{t * d + j}});
    }
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t t = 0; t + 1 < L; ++t) {
            queries.push_back({{t * d + j, (t + 1) * d + j}});
        }
    }
    if (variant == SelectionVariant::Across && d >= 2) {
        std::vector<MarginalQuery> pool;
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t j1 = 0; j1 < d; ++j1) {
                for (std::size_t j2 = j1 + 1; j2 < d; ++j2) {
                    pool.push_back({{t * d + j1, t * d + j2}});
                }
            }
        }
        RandomEngine rng(derive_seed(seed, hash_string("across-marginals")));
        const std::size_t take = std::min(max_across, pool.size());
        for (std::size_t idx : rng.sample_without_replacement(pool.size(), take)) {
            queries.push_back(pool[idx]);
        }
    }
    return queries;
}

struct SigmaCalibration {
    double rho_total = 0.0;
    double rho_per_query = 0.0;
    double sigma = 0.0;
};

// Splits the training budget uniformly over the query set: total rho solves
// eps_train = rho + 2 sqrt(rho ln(1/delta)); each query gets rho/num_queries
// and sigma = 1/sqrt(2 rho_i) at L2 sensitivity 1 (adding or removing one
// user changes one cell of each marginal by 1).
inline SigmaCalibration calibrate_sigma(const PrivacyBudget& budget, std::size_t num_queries) {
    budget.validate();
    if (num_queries < 1) throw std::invalid_argument("calibrate_sigma: need at least one query");
    if (budget.epsilon_train() <= 0.0) throw BudgetError("calibrate_sigma: non-positive training budget");
    SigmaCalibration cal;
    cal.rho_total = rho_from_epsilon(budget.epsilon_train(), budget.delta);
    cal.rho_per_query = cal.rho_total / static_cast<double>(num_queries);
    cal.sigma = gaussian_sigma(cal.rho_per_query, 1.0);
    return cal;
}

struct NoisyMeasurement {
    MarginalQuery query;
    std::vector<double> counts;  // noised contingency vector, row-major for 2-way
    double sigma = 0.0;
    double rho = 0.0;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> encode_flat(const FlatTable& flat,
                                                         const Discretizer& disc) {
    if (disc.columns() != flat.flat_schema.size()) {
        throw std::invalid_argument("measure: discretizer does not match the flat schema");
    }
    std::vector<std::vector<std::size_t>> codes;
    codes.reserve(flat.rows.size());
    for (const Row& row : flat.rows) codes.push_back(disc.encode_row(row));
    return codes;
}

}  // namespace detail

// Gaussian mechanism over the selected marginals: exact contingency counts
// plus i.i.d. N(0, sigma^2) per cell. Negative noisy counts pass through
// unchanged; projection happens at estimation time.
inline std::vector<NoisyMeasurement> measure(const FlatTable& flat, const Discretizer& disc,
                                             const std::vector<MarginalQuery>& queries, double sigma,
                                             std::uint64_t seed) {
    const auto codes = detail::encode_flat(flat, disc);
    const double rho = sigma > 0.0 ? rho_of_gaussian(sigma, 1.0) : 0.0;
    std::vector<NoisyMeasurement> out;
    out.reserve(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const MarginalQuery& query = queries[q];
        if (query.columns.empty() || query.columns.size() > 2) {
            throw std::invalid_argument("measure: queries must have 1 or 2 columns");
        }
        std::size_t cells = 1;
        for (std::size_t c : query.columns) cells *= disc.coder(c).code_count();
        std::vector<double> counts(cells, 0.0);
        for (const auto& row_codes : codes) {
            std::size_t idx = 0;
            for (std::size_t c : query.columns) idx = idx * disc.coder(c).code_count() + row_codes[c];
            counts[idx] += 1.0;
        }
        if (sigma > 0.0) {
            RandomEngine rng(derive_seed(seed, q));
            for (double& v : counts) v += rng.normal(0.0, sigma);
        }
        out.push_back({query, std::move(counts), sigma, rho});
    }
    return out;
}

// Per-feature inhomogeneous Markov chain over the code spaces of the flat
// columns: an initial distribution at t=1 and one transition matrix per
// adjacent step.
struct FeatureChain {
    std::vector<double> initial;
    std::vector<std::vector<std::vector<double>>> transitions;  // [t][from][to]
};

struct MarkovChainModel {
    std::size_t d = 0;
    std::size_t length = 0;
    std::vector<FeatureChain> features;
};

namespace detail {

inline std::vector<double> clamp_normalize(std::vector<double> v) {
    double total = 0.0;
    for (double& x : v) {
        if (x < 0.0) x = 0.0;
        total += x;
    }
    if (total <= 0.0) {
        const double u = 1.0 / static_cast<double>(v.size());
        for (double& x : v) x = u;
        return v;
    }
    for (double& x : v) x /= total;
    return v;
}

}  // namespace detail

// Negative counts are clamped to zero and every distribution renormalized,
// with a uniform fallback for rows left without mass.
inline MarkovChainModel estimate_markov(const std::vector<NoisyMeasurement>& measurements,
                                        const Discretizer& disc, std::size_t d, std::size_t length) {
    std::map<MarginalQuery, const NoisyMeasurement*> by_query;
    for (const auto& m : measurements) by_query[m.query] = &m;
    auto require = [&](const MarginalQuery& q) -> const NoisyMeasurement& {
        const auto it = by_query.find(q);
        if (it == by_query.end()) {
            throw std::invalid_argument("estimate_markov: missing required measurement");
        }
        return *it->second;
    };

    MarkovChainModel model;
    model.d = d;
    model.length = length;
    model.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        FeatureChain& chain = model.features[j];
        chain.initial = detail::clamp_normalize(require({{j}}).counts);
        for (std::size_t t = 0; t + 1 < length; ++t) {
            const std::size_t from_col = t * d + j;
            const std::size_t to_col = (t + 1) * d + j;
            const NoisyMeasurement& m = require({{from_col, to_col}});
            const std::size_t from_codes = disc.coder(from_col).code_count();
            const std::size_t to_codes = disc.coder(to_col).code_count();
            std::vector<std::vector<double>> matrix;
            matrix.reserve(from_codes);
            for (std::size_t a = 0; a < from_codes; ++a) {
                std::vector<double> row(m.counts.begin() + static_cast<std::ptrdiff_t>(a * to_codes),
                                        m.counts.begin() + static_cast<std::ptrdiff_t>((a + 1) * to_codes));
                matrix.push_back(detail::clamp_normalize(std::move(row)));
            }
            chain.transitions.push_back(std::move(matrix));
        }
    }
    return model;
}

// Samples n flat rows feature-independently along the per-feature chains and
// decodes codes through the discretizer (bin midpoints / category names).
inline FlatTable sample_flat(const MarkovChainModel& model, const Discretizer& disc,
                             const Schema& base_schema, std::size_t n, std::uint64_t seed,
                             const std::string& id_prefix = "direct_") {
    FlatTable flat;
    flat.base_schema = base_schema;
    flat.flat_schema = disc.schema();
    flat.length = model.length;
    if (flat.flat_schema.size() != model.d * model.length) {
        throw std::invalid_argument("sample_flat: model does not match the discretizer schema");
    }
    int width = 1;
    for (std::size_t v = std::max<std::size_t>(n, 1); v >= 10; v /= 10) ++width;
    for (std::size_t i = 0; i < n; ++i) {
        RandomEngine rng(derive_seed(seed, i));
        Row row(model.d * model.length, Value::null());
        for (std::size_t j = 0; j < model.d; ++j) {
            const FeatureChain& chain = model.features[j];
            std::size_t code = rng.categorical(chain.initial);
            row[j] = disc.coder(j).decode(code);
            for (std::size_t t = 0; t + 1 < model.length; ++t) {
                code = rng.categorical(chain.transitions[t][code]);
                row[(t + 1) * model.d + j] = disc.coder((t + 1) * model.d + j).decode(code);
            }
        }
        std::string id(static_cast<std::size_t>(width), '0');
        {
            const std::string digits = std::to_string(i);
            id.replace(id.size() - digits.size(), digits.size(), digits);
        }
        flat.user_ids.push_back(id_prefix + id);
        flat.rows.push_back(std::move(row));
    }
    return flat;
}

// 99th percentile by the nearest-rank method (1-based ceil(p*n)).
inline double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    std::size_t rank = static_cast<std::size_t>(std::ceil(p * n));
    rank = std::min(std::max<std::size_t>(rank, 1), values.size());
    return values[rank - 1];
}

// Clamps numeric cells into the [min, P99] range of the reference column.
// When the reference is the private data this heuristic is not covered by
// the DP guarantee; callers must label outputs accordingly.
inline Collection clip_postprocess(const Collection& collection, const Collection& reference) {
    std::vector<std::optional<std::pair<double, double>>> ranges(collection.schema.size());
    for (std::size_t c = 0; c < collection.schema.size(); ++c) {
        if (collection.schema.column(c).kind != ColumnKind::Numeric) continue;
        std::vector<double> pooled;
        for (const auto& [id, table] : reference.tables) {
            for (const Row& row : table.rows) {
                if (!row[c].is_null()) pooled.push_back(row[c].number());
            }
        }
        if (pooled.empty()) {
            throw std::invalid_argument("clip_postprocess: reference column " +
                                        collection.schema.column(c).name + " has no values");
        }
        const double lo = *std::min_element(pooled.begin(), pooled.end());
        const double hi = nearest_rank_percentile(pooled, 0.99);
        ranges[c] = {lo, hi};
    }
    Collection out;
    out.schema = collection.schema;
    for (const auto& [id, table] : collection.tables) {
        UserTable copy;
        copy.user_id = id;
        copy.rows.reserve(table.rows.size());
        for (const Row& row : table.rows) {
            Row clipped = row;
            for (std::size_t c = 0; c < clipped.size(); ++c) {
                if (!ranges[c] || clipped[c].is_null()) continue;
                const double v = std::clamp(clipped[c].number(), ranges[c]->first, ranges[c]->second);
                if (v != clipped[c].number()) clipped[c] = Value::numeric(v);
            }
            copy.rows.push_back(std::move(clipped));
        }
        out.tables.emplace(id, std::move(copy));
    }
    return out;
}

}  // namespace longsynth
