#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "longsynth/core.hpp"
#include "longsynth/embedding.hpp"
#include "longsynth/hmm.hpp"
#include "longsynth/metrics.hpp"

namespace longsynth {

struct EvaluateConfig {
    std::size_t transition_states = 5;
    std::size_t tdcr_bins = 50;
    std::size_t mauve_clusters = 0;  // 0: min(n/10, 128), floor 2
    double mauve_scale_c = 5.0;
    std::size_t mauve_grid = 99;
    double classifier_split = 0.7;
    std::size_t categorical_top_k = 10;
    std::optional<std::string> timestamp_column;    // default: first timestamp column
    std::optional<std::string> categorical_column;  // default: first categorical column
    std::optional<HmmSpec> hmm_spec;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // runtime knob, never echoed into reports

    static EvaluateConfig from_json(const nlohmann::json& j) {
        EvaluateConfig cfg;
        if (j.contains("transition_states")) cfg.transition_states = j.at("transition_states").get<std::size_t>();
        if (j.contains("tdcr_bins")) cfg.tdcr_bins = j.at("tdcr_bins").get<std::size_t>();
        if (j.contains("mauve_clusters")) cfg.mauve_clusters = j.at("mauve_clusters").get<std::size_t>();
        if (j.contains("mauve_scale_c")) cfg.mauve_scale_c = j.at("mauve_scale_c").get<double>();
        if (j.contains("mauve_grid")) cfg.mauve_grid = j.at("mauve_grid").get<std::size_t>();
        if (j.contains("classifier_split")) cfg.classifier_split = j.at("classifier_split").get<double>();
        if (j.contains("categorical_top_k")) cfg.categorical_top_k = j.at("categorical_top_k").get<std::size_t>();
        if (j.contains("timestamp_column")) cfg.timestamp_column = j.at("timestamp_column").get<std::string>();
        if (j.contains("categorical_column")) cfg.categorical_column = j.at("categorical_column").get<std::string>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        return cfg;
    }
};

// All metric outputs plus the exact parameters that produced them; the JSON
// form is byte-stable for a fixed config and seed.
struct MetricReport {
    nlohmann::ordered_json payload;

    std::string dump() const { return payload.dump(2) + "\n"; }
};

namespace detail {

inline nlohmann::ordered_json per_feature_json(const PerFeatureResult& r) {
    nlohmann::ordered_json j;
    j["average"] = r.average;
    nlohmann::ordered_json per;
    for (const auto& [name, value] : r.per_feature) per[name] = value;
    j["per_feature"] = per;
    if (!r.skipped.empty()) j["skipped_features"] = r.skipped;
    return j;
}

}  // namespace detail

// Runs every applicable metric; individual metric failures are recorded
// under "errors" and the run continues.
inline MetricReport evaluate(const Collection& real_train, const Collection& real_test,
                             const Collection& synth, const EvaluateConfig& cfg) {
    MetricReport report;
    nlohmann::ordered_json& j = report.payload;

    std::size_t mauve_clusters = cfg.mauve_clusters;
    if (mauve_clusters == 0) {
        const std::size_t n = std::min(real_test.size(), synth.size());
        mauve_clusters = std::max<std::size_t>(2, std::min<std::size_t>(n / 10, 128));
    }

    std::optional<std::string> ts_col = cfg.timestamp_column;
    std::optional<std::string> cat_col = cfg.categorical_column;
    for (const Column& c : real_train.schema.columns()) {
        if (!ts_col && c.kind == ColumnKind::Timestamp) ts_col = c.name;
        if (!cat_col && c.kind == ColumnKind::Categorical) cat_col = c.name;
    }

    nlohmann::ordered_json params;
    params["transition_states"] = cfg.transition_states;
    params["tdcr_bins"] = cfg.tdcr_bins;
    params["mauve_clusters"] = mauve_clusters;
    params["mauve_scale_c"] = cfg.mauve_scale_c;
    params["mauve_grid"] = cfg.mauve_grid;
    params["classifier_split"] = cfg.classifier_split;
    params["categorical_top_k"] = cfg.categorical_top_k;
    params["seed"] = cfg.seed;
    params["n_train"] = real_train.size();
    params["n_test"] = real_test.size();
    params["n_synth"] = synth.size();
    params["reference_side"] = "test";
    if (ts_col) params["timestamp_column"] = *ts_col;
    if (cat_col) params["categorical_column"] = *cat_col;
    j["parameters"] = params;

    nlohmann::ordered_json metrics;
    nlohmann::ordered_json errors;
    auto guarded = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            metrics[name] = "skipped";
            errors[name] = e.what();
        }
    };

    guarded("tdcr_jsd", [&] {
        const TdcrResult r = tdcr(synth, real_train, real_test, cfg.tdcr_bins, cfg.threads);
        metrics["tdcr_jsd"] = r.jsd;
        nlohmann::ordered_json detail;
        detail["synth_nulls_dropped"] = r.synth_nulls_dropped;
        detail["test_nulls_dropped"] = r.test_nulls_dropped;
        metrics["tdcr_detail"] = detail;
    });
    guarded("marginal_divergence", [&] {
        metrics["marginal_divergence"] = detail::per_feature_json(
            univariate_marginal_divergence(real_test, synth));
    });
    guarded("transition_divergence", [&] {
        metrics["transition_divergence"] = detail::per_feature_json(
            transition_divergence(real_test, synth, cfg.transition_states));
    });

    ReferenceEmbedder embedder(real_train.schema, cfg.seed);
    bool embedder_ready = false;
    try {
        embedder.fit(real_train);
        embedder_ready = true;
    } catch (const std::exception& e) {
        errors["embedder"] = e.what();
    }
    if (embedder_ready) {
        const EmbeddingMatrix emb_test = embed_collection(embedder, real_test);
        const EmbeddingMatrix emb_synth = embed_collection(embedder, synth);
        guarded("mauve", [&] {
            metrics["mauve"] = mauve(emb_test.rows, emb_synth.rows, mauve_clusters,
                                     cfg.mauve_scale_c, cfg.mauve_grid, cfg.seed);
        });
        guarded("classifier_auc", [&] {
            metrics["classifier_auc"] =
                classifier_auc(emb_test.rows, emb_synth.rows, cfg.classifier_split, cfg.seed);
        });
    } else {
        metrics["mauve"] = "skipped";
        metrics["classifier_auc"] = "skipped";
    }

    if (cfg.hmm_spec) {
        guarded("hmm_likelihood_w1", [&] {
            const LikelihoodDivergence r =
                likelihood_divergence(*cfg.hmm_spec, real_test, synth, cfg.threads);
            metrics["hmm_likelihood_w1"] = r.w1;
            nlohmann::ordered_json detail;
            detail["real_scored"] = r.real_scored;
            detail["synth_scored"] = r.synth_scored;
            detail["real_excluded"] = r.real_excluded;
            detail["synth_excluded"] = r.synth_excluded;
            metrics["hmm_likelihood_detail"] = detail;
        });
    } else {
        metrics["hmm_likelihood_w1"] = "skipped";
    }

    if (ts_col) {
        guarded("hour_of_day_w1", [&] {
            metrics["hour_of_day_w1"] = hour_of_day_w1(real_test, synth, *ts_col);
        });
    } else {
        metrics["hour_of_day_w1"] = "skipped";
    }
    if (cat_col) {
        guarded("categorical_transition_frobenius", [&] {
            metrics["categorical_transition_frobenius"] = categorical_transition_divergence(
                real_test, synth, *cat_col, cfg.categorical_top_k);
        });
    } else {
        metrics["categorical_transition_frobenius"] = "skipped";
    }

    j["metrics"] = metrics;
    j["errors"] = errors;
    return report;
}

// Plot-data emitters: the CLI writes these as CSV so figures can be drawn
// by external tooling.

inline std::string distances_csv(const std::vector<double>& synth_d,
                                 const std::vector<double>& test_d) {
    std::ostringstream out;
    out << "sample,distance\n";
    for (double v : synth_d) out << "synth," << render_double(v) << '\n';
    for (double v : test_d) out << "test," << render_double(v) << '\n';
    return out.str();
}

inline std::string histogram_csv(const std::vector<double>& synth_v, const std::vector<double>& test_v,
                                 std::size_t bins) {
    double hi = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (double v : synth_v) {
        hi = std::max(hi, v);
        lo = std::min(lo, v);
    }
    for (double v : test_v) {
        hi = std::max(hi, v);
        lo = std::min(lo, v);
    }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    std::vector<std::size_t> hs(bins, 0);
    std::vector<std::size_t> ht(bins, 0);
    auto bucket = [&](double v) {
        const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        return std::min(b, bins - 1);
    };
    for (double v : synth_v) ++hs[bucket(v)];
    for (double v : test_v) ++ht[bucket(v)];
    std::ostringstream out;
    out << "bin_lo,bin_hi,synth_count,test_count\n";
    for (std::size_t b = 0; b < bins; ++b) {
        const double blo = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
        const double bhi = lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(bins);
        out << render_double(blo) << ',' << render_double(bhi) << ',' << hs[b] << ',' << ht[b] << '\n';
    }
    return out.str();
}

// 2D bin-count grid over two numeric columns (e.g. latitude/longitude) with
// a fixed bin width; the grid is anchored on the reference collection.
inline std::string density_grid_csv(const Collection& reference, const Collection& data,
                                    const std::string& x_col, const std::string& y_col,
                                    double bin_width) {
    if (bin_width <= 0.0) throw std::invalid_argument("density grid: bin width must be positive");
    const std::size_t xc = reference.schema.require_index(x_col);
    const std::size_t yc = reference.schema.require_index(y_col);
    auto numeric = [&](const Value& v) {
        return v.kind() == Value::Kind::Timestamp ? static_cast<double>(v.seconds()) : v.number();
    };
    double xmin = std::numeric_limits<double>::infinity();
    double ymin = std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& [id, table] : reference.tables) {
        for (const Row& row : table.rows) {
            if (row[xc].is_null() || row[yc].is_null()) continue;
            xmin = std::min(xmin, numeric(row[xc]));
            ymin = std::min(ymin, numeric(row[yc]));
            any = true;
        }
    }
    if (!any) throw std::invalid_argument("density grid: reference has no points");
    std::map<std::pair<long long, long long>, std::size_t> counts;
    for (const auto& [id, table] : data.tables) {
        for (const Row& row : table.rows) {
            if (row[xc].is_null() || row[yc].is_null()) continue;
            const auto bx = static_cast<long long>(std::floor((numeric(row[xc]) - xmin) / bin_width));
            const auto by = static_cast<long long>(std::floor((numeric(row[yc]) - ymin) / bin_width));
            ++counts[{bx, by}];
        }
    }
    std::ostringstream out;
    out << x_col << "_bin_center," << y_col << "_bin_center,count\n";
    for (const auto& [cell, count] : counts) {
        const double cx = xmin + (static_cast<double>(cell.first) + 0.5) * bin_width;
        const double cy = ymin + (static_cast<double>(cell.second) + 0.5) * bin_width;
        out << render_double(cx) << ',' << render_double(cy) << ',' << count << '\n';
    }
    return out.str();
}

}  // namespace longsynth
