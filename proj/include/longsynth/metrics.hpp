#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "longsynth/core.hpp"
#include "longsynth/dtw.hpp"
#include "longsynth/embedding.hpp"
#include "longsynth/hmm.hpp"
#include "longsynth/parallel.hpp"
#include "longsynth/rng.hpp"
#include "longsynth/time.hpp"
#include "longsynth/wasserstein.hpp"

namespace longsynth {

// Jensen-Shannon distance with base-2 logs (sqrt of the divergence), so the
// value is bounded in [0, 1]. Inputs are histograms; they are normalized
// here and 0 * log 0 is treated as 0.
inline double jensen_shannon_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) {
        throw std::invalid_argument("jensen_shannon_distance: size mismatch");
    }
    double sp = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("jensen_shannon_distance: negative mass");
        sp += p[i];
        sq += q[i];
    }
    if (sp <= 0.0 || sq <= 0.0) throw std::invalid_argument("jensen_shannon_distance: empty histogram");
    double js = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p[i] / sp;
        const double qi = q[i] / sq;
        const double mi = 0.5 * (pi + qi);
        if (pi > 0.0) js += 0.5 * pi * std::log2(pi / mi);
        if (qi > 0.0) js += 0.5 * qi * std::log2(qi / mi);
    }
    return std::sqrt(std::clamp(js, 0.0, 1.0));
}

// Per-attribute z-scoring statistics, fit on the real training collection.
struct ScalingStats {
    std::map<std::string, std::pair<double, double>> mean_std;

    static ScalingStats fit(const Collection& collection) {
        ScalingStats stats;
        for (std::size_t c = 0; c < collection.schema.size(); ++c) {
            const Column& col = collection.schema.column(c);
            if (col.kind == ColumnKind::Categorical) continue;
            double sum = 0.0;
            double sq = 0.0;
            double n = 0.0;
            for (const auto& [id, table] : collection.tables) {
                for (const Row& row : table.rows) {
                    if (row[c].is_null()) continue;
                    const double x = col.kind == ColumnKind::Timestamp
                                         ? static_cast<double>(row[c].seconds())
                                         : row[c].number();
                    sum += x;
                    sq += x * x;
                    n += 1.0;
                }
            }
            const double mean = n > 0.0 ? sum / n : 0.0;
            const double var = n > 0.0 ? std::max(0.0, sq / n - mean * mean) : 0.0;
            stats.mean_std[col.name] = {mean, std::sqrt(var)};
        }
        return stats;
    }
};

namespace detail {

inline std::vector<double> numeric_sequence(const UserTable& table, std::size_t column,
                                            ColumnKind kind) {
    std::vector<double> out;
    out.reserve(table.rows.size());
    for (const Row& row : table.rows) {
        if (row[column].is_null()) continue;
        out.push_back(kind == ColumnKind::Timestamp ? static_cast<double>(row[column].seconds())
                                                    : row[column].number());
    }
    return out;
}

inline std::vector<std::string> categorical_sequence(const UserTable& table, std::size_t column) {
    std::vector<std::string> out;
    out.reserve(table.rows.size());
    for (const Row& row : table.rows) {
        if (!row[column].is_null()) out.push_back(row[column].category());
    }
    return out;
}

}  // namespace detail

// Weighted sum of per-attribute normalized DTW distances: numeric attributes
// are z-scored against the training statistics and aligned by
// absolute-difference DTW; categorical attributes use 0/1 substitution cost.
// Attributes with no values on either side are skipped.
inline double table_distance(const Schema& schema, const UserTable& a, const UserTable& b,
                             const ScalingStats& scaling,
                             const std::map<std::string, double>* weights = nullptr,
                             std::vector<std::string>* skipped = nullptr) {
    double total = 0.0;
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const Column& col = schema.column(c);
        const double w = weights && weights->count(col.name) ? weights->at(col.name) : 1.0;
        if (col.kind == ColumnKind::Categorical) {
            const auto sa = detail::categorical_sequence(a, c);
            const auto sb = detail::categorical_sequence(b, c);
            if (sa.empty() || sb.empty()) {
                if (skipped) skipped->push_back(col.name);
                continue;
            }
            total += w * dtw_categorical(sa, sb).normalized;
        } else {
            auto sa = detail::numeric_sequence(a, c, col.kind);
            auto sb = detail::numeric_sequence(b, c, col.kind);
            if (sa.empty() || sb.empty()) {
                if (skipped) skipped->push_back(col.name);
                continue;
            }
            const auto it = scaling.mean_std.find(col.name);
            if (it != scaling.mean_std.end() && it->second.second > 1e-12) {
                const double mean = it->second.first;
                const double sd = it->second.second;
                for (double& x : sa) x = (x - mean) / sd;
                for (double& x : sb) x = (x - mean) / sd;
            }
            total += w * dtw(sa, sb).normalized;
        }
    }
    return total;
}

// Distance from each query table to its nearest neighbor in the training
// collection. Parallel over queries; output order is the query id order.
inline std::vector<double> nearest_neighbor_distances(const Collection& queries,
                                                      const Collection& train,
                                                      const ScalingStats& scaling,
                                                      unsigned threads = 0) {
    std::vector<const UserTable*> query_tables;
    for (const auto& [id, t] : queries.tables) query_tables.push_back(&t);
    std::vector<const UserTable*> train_tables;
    for (const auto& [id, t] : train.tables) train_tables.push_back(&t);
    if (query_tables.empty() || train_tables.empty()) {
        throw std::invalid_argument("nearest_neighbor_distances: empty collection");
    }
    std::vector<double> out(query_tables.size());
    parallel_for(
        query_tables.size(),
        [&](std::size_t i) {
            double best = std::numeric_limits<double>::infinity();
            for (const UserTable* t : train_tables) {
                best = std::min(best, table_distance(queries.schema, *query_tables[i], *t, scaling));
            }
            out[i] = best;
        },
        threads);
    return out;
}

struct TdcrResult {
    double jsd = 0.0;
    std::vector<double> synth_distances;
    std::vector<double> test_distances;
    std::size_t bins = 0;
    // Null cells dropped from the query sides before alignment.
    std::size_t synth_nulls_dropped = 0;
    std::size_t test_nulls_dropped = 0;
};

inline std::size_t count_null_cells(const Collection& collection) {
    std::size_t nulls = 0;
    for (const auto& [id, table] : collection.tables) {
        for (const Row& row : table.rows) {
            for (const Value& v : row) {
                if (v.is_null()) ++nulls;
            }
        }
    }
    return nulls;
}

inline double tdcr_jsd_from_distances(const std::vector<double>& synth_d,
                                      const std::vector<double>& test_d, std::size_t bins) {
    if (bins < 1) throw std::invalid_argument("tdcr: bins must be >= 1");
    double hi = 0.0;
    for (double v : synth_d) hi = std::max(hi, v);
    for (double v : test_d) hi = std::max(hi, v);
    std::vector<double> p(bins, 0.0);
    std::vector<double> q(bins, 0.0);
    auto bucket = [&](double v) -> std::size_t {
        if (hi <= 0.0) return 0;
        const auto b = static_cast<std::size_t>(v / hi * static_cast<double>(bins));
        return std::min(b, bins - 1);
    };
    for (double v : synth_d) p[bucket(v)] += 1.0;
    for (double v : test_d) q[bucket(v)] += 1.0;
    return jensen_shannon_distance(p, q);
}

// Table-wise distance-to-closest-record: nearest-neighbor distance of every
// synthetic table to the training set, the same for held-out test tables,
// and the Jensen-Shannon distance between the two histogrammed samples.
inline TdcrResult tdcr(const Collection& synth, const Collection& train, const Collection& test,
                       std::size_t bins, unsigned threads = 0) {
    TdcrResult result;
    result.bins = bins;
    result.synth_nulls_dropped = count_null_cells(synth);
    result.test_nulls_dropped = count_null_cells(test);
    const ScalingStats scaling = ScalingStats::fit(train);
    result.synth_distances = nearest_neighbor_distances(synth, train, scaling, threads);
    result.test_distances = nearest_neighbor_distances(test, train, scaling, threads);
    result.jsd = tdcr_jsd_from_distances(result.synth_distances, result.test_distances, bins);
    return result;
}

struct PerFeatureResult {
    std::map<std::string, double> per_feature;
    double average = 0.0;
    std::vector<std::string> skipped;
};

// Pooled per-feature W1 between real and synthetic value multisets,
// ignoring temporal order. Numeric features only.
inline PerFeatureResult univariate_marginal_divergence(const Collection& real,
                                                       const Collection& synth) {
    PerFeatureResult result;
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < real.schema.size(); ++c) {
        const Column& col = real.schema.column(c);
        if (col.kind != ColumnKind::Numeric) continue;
        std::vector<double> rv;
        std::vector<double> sv;
        for (const auto& [id, table] : real.tables) {
            for (const Row& row : table.rows) {
                if (!row[c].is_null()) rv.push_back(row[c].number());
            }
        }
        for (const auto& [id, table] : synth.tables) {
            for (const Row& row : table.rows) {
                if (!row[c].is_null()) sv.push_back(row[c].number());
            }
        }
        if (rv.empty() || sv.empty()) {
            result.skipped.push_back(col.name);
            continue;
        }
        const double w1 = wasserstein1(rv, sv);
        result.per_feature[col.name] = w1;
        total += w1;
        ++counted;
    }
    if (counted > 0) result.average = total / static_cast<double>(counted);
    return result;
}

namespace detail {

// Quantile state edges (S-1 interior edges) fit on pooled real values,
// linear interpolation between order statistics. Returns nullopt when the
// feature is degenerate (edges not strictly increasing).
inline std::optional<std::vector<double>> quantile_state_edges(std::vector<double> values,
                                                               std::size_t states) {
    if (values.size() < 2) return std::nullopt;
    std::sort(values.begin(), values.end());
    std::vector<double> edges;
    for (std::size_t s = 1; s < states; ++s) {
        const double q = static_cast<double>(s) / static_cast<double>(states);
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        const double v = lo + 1 < values.size() ? values[lo] * (1.0 - frac) + values[lo + 1] * frac
                                                : values[lo];
        edges.push_back(v);
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) return std::nullopt;
    }
    if (edges.empty()) return std::nullopt;
    return edges;
}

inline std::size_t state_of(double v, const std::vector<double>& edges) {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

// Row-normalized transition matrix from pooled adjacent-row state pairs.
// Rows without mass are set uniform and flagged.
struct TransitionMatrix {
    std::vector<std::vector<double>> rows;
    std::vector<bool> uniform_fallback;
    std::size_t skipped_transitions = 0;  // transitions involving a Null

    static TransitionMatrix from_counts(std::vector<std::vector<double>> counts) {
        TransitionMatrix m;
        m.rows = std::move(counts);
        m.uniform_fallback.assign(m.rows.size(), false);
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
            double total = 0.0;
            for (double v : m.rows[i]) total += v;
            if (total <= 0.0) {
                const double u = 1.0 / static_cast<double>(m.rows[i].size());
                for (double& v : m.rows[i]) v = u;
                m.uniform_fallback[i] = true;
            } else {
                for (double& v : m.rows[i]) v /= total;
            }
        }
        return m;
    }
};

inline double frobenius_difference(const TransitionMatrix& a, const TransitionMatrix& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        for (std::size_t j = 0; j < a.rows[i].size(); ++j) {
            const double d = a.rows[i][j] - b.rows[i][j];
            sum += d * d;
        }
    }
    return std::sqrt(sum);
}

template <typename StateOf>
TransitionMatrix transition_matrix(const Collection& collection, std::size_t column,
                                   std::size_t states, StateOf&& state_of_value) {
    std::vector<std::vector<double>> counts(states, std::vector<double>(states, 0.0));
    std::size_t skipped = 0;
    for (const auto& [id, table] : collection.tables) {
        for (std::size_t r = 0; r + 1 < table.rows.size(); ++r) {
            const Value& a = table.rows[r][column];
            const Value& b = table.rows[r + 1][column];
            if (a.is_null() || b.is_null()) {
                ++skipped;
                continue;
            }
            counts[state_of_value(a)][state_of_value(b)] += 1.0;
        }
    }
    TransitionMatrix m = TransitionMatrix::from_counts(std::move(counts));
    m.skipped_transitions = skipped;
    return m;
}

}  // namespace detail

// Per-feature Frobenius norm between real and synthetic quantile-state
// transition matrices. Quantile edges are fit on the real collection;
// degenerate (near-constant) features are skipped and reported.
inline PerFeatureResult transition_divergence(const Collection& real, const Collection& synth,
                                              std::size_t states) {
    if (states < 2) throw std::invalid_argument("transition_divergence: need at least 2 states");
    PerFeatureResult result;
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < real.schema.size(); ++c) {
        const Column& col = real.schema.column(c);
        if (col.kind == ColumnKind::Categorical) continue;
        std::vector<double> pooled;
        for (const auto& [id, table] : real.tables) {
            for (const Row& row : table.rows) {
                if (row[c].is_null()) continue;
                pooled.push_back(col.kind == ColumnKind::Timestamp
                                     ? static_cast<double>(row[c].seconds())
                                     : row[c].number());
            }
        }
        const auto edges = detail::quantile_state_edges(std::move(pooled), states);
        if (!edges) {
            result.skipped.push_back(col.name);
            continue;
        }
        auto state_of_value = [&](const Value& v) {
            const double x =
                col.kind == ColumnKind::Timestamp ? static_cast<double>(v.seconds()) : v.number();
            return detail::state_of(x, *edges);
        };
        const auto mr = detail::transition_matrix(real, c, states, state_of_value);
        const auto ms = detail::transition_matrix(synth, c, states, state_of_value);
        const double d = detail::frobenius_difference(mr, ms);
        result.per_feature[col.name] = d;
        total += d;
        ++counted;
    }
    if (counted > 0) result.average = total / static_cast<double>(counted);
    return result;
}

namespace detail {

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::size_t clusters = 0;
};

// Lloyd's algorithm with D^2-weighted seeding, fixed iteration cap 100.
// Points are processed in lexicographic order so the clustering (and hence
// every metric built on it) does not depend on input ordering.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& input_points, std::size_t k,
                           RandomEngine& rng) {
    if (input_points.size() < k) throw std::invalid_argument("kmeans: fewer points than clusters");
    std::vector<std::size_t> order(input_points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return input_points[a] < input_points[b];
    });
    std::vector<std::vector<double>> points(input_points.size());
    for (std::size_t i = 0; i < order.size(); ++i) points[i] = input_points[order[i]];
    const std::size_t dim = points.front().size();
    auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = a[j] - b[j];
            s += d * d;
        }
        return s;
    };

    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    centers.push_back(points[rng.uniform_below(points.size())]);
    std::vector<double> best_d2(points.size(), std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            best_d2[i] = std::min(best_d2[i], dist2(points[i], centers.back()));
        }
        double total = 0.0;
        for (double v : best_d2) total += v;
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = rng.uniform_below(points.size());
        } else {
            const double r = rng.uniform01() * total;
            double acc = 0.0;
            chosen = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                acc += best_d2[i];
                if (r < acc) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.push_back(points[chosen]);
    }

    KMeansResult result;
    result.clusters = k;
    result.assignment.assign(points.size(), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = dist2(points[i], centers[c]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            if (arg != result.assignment[i]) {
                result.assignment[i] = arg;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            for (std::size_t j = 0; j < dim; ++j) sums[result.assignment[i]][j] += points[i][j];
            ++counts[result.assignment[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its center
            for (std::size_t j = 0; j < dim; ++j) {
                centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
            }
        }
    }
    KMeansResult unsorted;
    unsorted.clusters = k;
    unsorted.assignment.assign(points.size(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        unsorted.assignment[order[i]] = result.assignment[i];
    }
    return unsorted;
}

inline double kl_nats(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
    }
    return s;
}

}  // namespace detail

// Divergence-frontier score between two embedded samples: joint k-means
// quantization, add-(1/k) smoothed cluster histograms, a KL mixture curve
// over `grid` interior lambdas mapped through f(x) = exp(-c x), and the area
// under that curve with endpoints (0,1) and (1,0) appended. The larger side
// is downsampled to the smaller so sample sizes match.
inline double mauve(const std::vector<std::vector<double>>& emb_p,
                    const std::vector<std::vector<double>>& emb_q, std::size_t num_clusters,
                    double scale_c, std::size_t grid, std::uint64_t seed) {
    if (num_clusters < 1) throw std::invalid_argument("mauve: need at least one cluster");
    if (grid < 1) throw std::invalid_argument("mauve: empty lambda grid");
    std::vector<std::vector<double>> p = emb_p;
    std::vector<std::vector<double>> q = emb_q;
    RandomEngine rng(derive_seed(seed, hash_string("mauve")));
    auto downsample = [&](std::vector<std::vector<double>>& v, std::size_t target) {
        std::vector<std::vector<double>> out;
        out.reserve(target);
        for (std::size_t idx : rng.sample_without_replacement(v.size(), target)) {
            out.push_back(std::move(v[idx]));
        }
        v = std::move(out);
    };
    if (p.size() > q.size()) downsample(p, q.size());
    else if (q.size() > p.size()) downsample(q, p.size());
    if (p.size() < num_clusters) throw std::invalid_argument("mauve: fewer points than clusters");

    std::vector<std::vector<double>> joint;
    joint.reserve(p.size() + q.size());
    joint.insert(joint.end(), p.begin(), p.end());
    joint.insert(joint.end(), q.begin(), q.end());
    const auto clustering = detail::kmeans(joint, num_clusters, rng);

    const double smoothing = 1.0 / static_cast<double>(num_clusters);
    std::vector<double> hist_p(num_clusters, smoothing);
    std::vector<double> hist_q(num_clusters, smoothing);
    for (std::size_t i = 0; i < p.size(); ++i) hist_p[clustering.assignment[i]] += 1.0;
    for (std::size_t i = 0; i < q.size(); ++i) hist_q[clustering.assignment[p.size() + i]] += 1.0;
    const double denom_p = static_cast<double>(p.size()) + 1.0;
    const double denom_q = static_cast<double>(q.size()) + 1.0;
    for (double& v : hist_p) v /= denom_p;
    for (double& v : hist_q) v /= denom_q;

    std::vector<std::pair<double, double>> curve;
    curve.reserve(grid + 2);
    curve.emplace_back(0.0, 1.0);
    curve.emplace_back(1.0, 0.0);
    std::vector<double> mix(num_clusters);
    for (std::size_t g = 1; g <= grid; ++g) {
        const double lambda = static_cast<double>(g) / static_cast<double>(grid + 1);
        for (std::size_t i = 0; i < num_clusters; ++i) {
            mix[i] = (1.0 - lambda) * hist_p[i] + lambda * hist_q[i];
        }
        const double x = std::exp(-scale_c * detail::kl_nats(hist_q, mix));
        const double y = std::exp(-scale_c * detail::kl_nats(hist_p, mix));
        curve.emplace_back(x, y);
    }
    std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second > b.second;
    });
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].first - curve[i - 1].first) * 0.5 * (curve[i].second + curve[i - 1].second);
    }
    return std::clamp(area, 0.0, 1.0);
}

// Two-sample classifier test: logistic regression (full-batch gradient
// descent, 500 iterations, step 0.1, inputs z-scored on the training split)
// on embeddings labeled real = 0 / synth = 1; returns the held-out AUC-ROC
// by the rank statistic with tie correction. The 70/30 split is stratified
// per class.
inline double classifier_auc(const std::vector<std::vector<double>>& emb_real,
                             const std::vector<std::vector<double>>& emb_synth, double split,
                             std::uint64_t seed) {
    if (emb_real.size() < 20 || emb_synth.size() < 20) {
        throw std::invalid_argument("classifier_auc: need at least 20 points per side");
    }
    if (split <= 0.0 || split >= 1.0) throw std::invalid_argument("classifier_auc: bad split");
    const std::size_t dim = emb_real.front().size();
    RandomEngine rng(derive_seed(seed, hash_string("classifier")));

    std::vector<const std::vector<double>*> train_x;
    std::vector<int> train_y;
    std::vector<const std::vector<double>*> test_x;
    std::vector<int> test_y;
    auto split_side = [&](const std::vector<std::vector<double>>& side, int label) {
        std::vector<std::size_t> idx(side.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        const auto n_train = static_cast<std::size_t>(
            std::floor(split * static_cast<double>(side.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < n_train) {
                train_x.push_back(&side[idx[i]]);
                train_y.push_back(label);
            } else {
                test_x.push_back(&side[idx[i]]);
                test_y.push_back(label);
            }
        }
    };
    split_side(emb_real, 0);
    split_side(emb_synth, 1);
    if (train_x.empty() || test_x.empty()) throw std::invalid_argument("classifier_auc: degenerate split");
    bool has0 = false;
    bool has1 = false;
    for (int y : test_y) (y == 0 ? has0 : has1) = true;
    if (!has0 || !has1) throw std::invalid_argument("classifier_auc: single-class test split");

    std::vector<double> mean(dim, 0.0);
    std::vector<double> scale(dim, 1.0);
    for (const auto* x : train_x) {
        for (std::size_t j = 0; j < dim; ++j) mean[j] += (*x)[j];
    }
    for (std::size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(train_x.size());
    std::vector<double> var(dim, 0.0);
    for (const auto* x : train_x) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = (*x)[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(train_x.size()));
        scale[j] = sd > 1e-12 ? sd : 0.0;
    }
    auto feature = [&](const std::vector<double>& x, std::size_t j) {
        return scale[j] > 0.0 ? (x[j] - mean[j]) / scale[j] : 0.0;
    };

    std::vector<double> w(dim, 0.0);
    double bias = 0.0;
    const double step = 0.1;
    const double inv_n = 1.0 / static_cast<double>(train_x.size());
    std::vector<double> grad(dim);
    for (int iter = 0; iter < 500; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_bias = 0.0;
        for (std::size_t i = 0; i < train_x.size(); ++i) {
            double z = bias;
            for (std::size_t j = 0; j < dim; ++j) z += w[j] * feature(*train_x[i], j);
            const double pred = 1.0 / (1.0 + std::exp(-z));
            const double err = pred - static_cast<double>(train_y[i]);
            for (std::size_t j = 0; j < dim; ++j) grad[j] += err * feature(*train_x[i], j);
            grad_bias += err;
        }
        for (std::size_t j = 0; j < dim; ++j) w[j] -= step * grad[j] * inv_n;
        bias -= step * grad_bias * inv_n;
    }

    // AUC via the Mann-Whitney rank statistic with midranks for ties.
    std::vector<std::pair<double, int>> scored(test_x.size());
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        double z = bias;
        for (std::size_t j = 0; j < dim; ++j) z += w[j] * feature(*test_x[i], j);
        scored[i] = {z, test_y[i]};
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t) {
            if (scored[t].second == 1) {
                rank_sum_pos += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = scored.size() - n_pos;
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// W1 between the diurnal (hour-of-day) distributions of a timestamp column.
inline double hour_of_day_w1(const Collection& real, const Collection& synth,
                             const std::string& ts_col) {
    const std::size_t c = real.schema.require_index(ts_col);
    if (real.schema.column(c).kind != ColumnKind::Timestamp) {
        throw std::invalid_argument("hour_of_day_w1: " + ts_col + " is not a timestamp column");
    }
    auto hours = [&](const Collection& collection) {
        std::vector<double> out;
        for (const auto& [id, table] : collection.tables) {
            for (const Row& row : table.rows) {
                if (!row[c].is_null()) out.push_back(static_cast<double>(hour_of_day(row[c].seconds())));
            }
        }
        return out;
    };
    const auto rh = hours(real);
    const auto sh = hours(synth);
    if (rh.empty() || sh.empty()) throw std::invalid_argument("hour_of_day_w1: no timestamps on a side");
    return wasserstein1(rh, sh);
}

// Frobenius distance between next-category transition matrices over the
// top-k most frequent real categories (ties by name); everything else maps
// to a shared OTHER state.
inline double categorical_transition_divergence(const Collection& real, const Collection& synth,
                                                const std::string& cat_col, std::size_t top_k) {
    if (top_k < 2) throw std::invalid_argument("categorical_transition_divergence: top_k must be >= 2");
    const std::size_t c = real.schema.require_index(cat_col);
    if (real.schema.column(c).kind != ColumnKind::Categorical) {
        throw std::invalid_argument("categorical_transition_divergence: " + cat_col +
                                    " is not categorical");
    }
    std::map<std::string, std::size_t> freq;
    for (const auto& [id, table] : real.tables) {
        for (const Row& row : table.rows) {
            if (!row[c].is_null()) ++freq[row[c].category()];
        }
    }
    if (freq.size() < 2) {
        throw std::invalid_argument("categorical_transition_divergence: fewer than 2 observed categories");
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t kept = std::min(top_k, ranked.size());
    std::map<std::string, std::size_t> state_of;
    for (std::size_t i = 0; i < kept; ++i) state_of[ranked[i].first] = i;
    const std::size_t other = kept;  // OTHER state, possibly empty
    const std::size_t states = kept + 1;
    auto value_state = [&](const Value& v) {
        const auto it = state_of.find(v.category());
        return it == state_of.end() ? other : it->second;
    };
    const auto mr = detail::transition_matrix(real, c, states, value_state);
    const auto ms = detail::transition_matrix(synth, c, states, value_state);
    return detail::frobenius_difference(mr, ms);
}

}  // namespace longsynth
