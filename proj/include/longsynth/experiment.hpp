#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "longsynth/accounting.hpp"
#include "longsynth/csv.hpp"
#include "longsynth/direct_synth.hpp"
#include "longsynth/evaluate.hpp"
#include "longsynth/flatten.hpp"
#include "longsynth/generator.hpp"
#include "longsynth/selection.hpp"

namespace longsynth {

// End-to-end pipeline configuration. delta defaults to 1/n^2 of the loaded
// training collection; epsilon_select defaults to the budget-split schedule
// for generator methods and to 0 for the direct baselines (which have no
// selection step).
struct ExperimentConfig {
    std::string train_csv;
    std::string test_csv;
    std::string schema_json;
    std::optional<std::string> hmm_spec_json;
    std::string method = "dp-markov";  // dp-markov | direct-markov | direct-across
    double epsilon_total = 2.0;
    std::optional<double> delta;
    std::optional<double> epsilon_select;
    std::size_t bins = 32;
    std::string binning = "equal_width";
    std::size_t truncate_length = 10;  // direct methods: filter-and-truncate L
    std::size_t max_across = 80;
    bool clip = false;
    std::size_t m_candidates = 0;  // 0: 2 * m_out
    std::size_t m_out = 500;
    std::size_t knn_k = 10;
    std::size_t max_len = 0;  // 0: max training length
    std::uint64_t seed = 0;
    std::string output_dir = "experiment_out";
    EvaluateConfig eval;
    unsigned threads = 0;

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig cfg;
        cfg.train_csv = j.at("train_csv").get<std::string>();
        cfg.test_csv = j.at("test_csv").get<std::string>();
        cfg.schema_json = j.at("schema_json").get<std::string>();
        if (j.contains("hmm_spec_json")) cfg.hmm_spec_json = j.at("hmm_spec_json").get<std::string>();
        if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
        if (j.contains("epsilon_total")) cfg.epsilon_total = j.at("epsilon_total").get<double>();
        if (j.contains("delta")) cfg.delta = j.at("delta").get<double>();
        if (j.contains("epsilon_select")) cfg.epsilon_select = j.at("epsilon_select").get<double>();
        if (j.contains("bins")) cfg.bins = j.at("bins").get<std::size_t>();
        if (j.contains("binning")) cfg.binning = j.at("binning").get<std::string>();
        if (j.contains("truncate_length")) cfg.truncate_length = j.at("truncate_length").get<std::size_t>();
        if (j.contains("max_across")) cfg.max_across = j.at("max_across").get<std::size_t>();
        if (j.contains("clip")) cfg.clip = j.at("clip").get<bool>();
        if (j.contains("m_candidates")) cfg.m_candidates = j.at("m_candidates").get<std::size_t>();
        if (j.contains("m_out")) cfg.m_out = j.at("m_out").get<std::size_t>();
        if (j.contains("knn_k")) cfg.knn_k = j.at("knn_k").get<std::size_t>();
        if (j.contains("max_len")) cfg.max_len = j.at("max_len").get<std::size_t>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("evaluate")) cfg.eval = EvaluateConfig::from_json(j.at("evaluate"));
        return cfg;
    }

    nlohmann::ordered_json echo(double resolved_delta, double resolved_select) const {
        nlohmann::ordered_json j;
        j["train_csv"] = train_csv;
        j["test_csv"] = test_csv;
        j["schema_json"] = schema_json;
        if (hmm_spec_json) j["hmm_spec_json"] = *hmm_spec_json;
        j["method"] = method;
        j["epsilon_total"] = epsilon_total;
        j["delta"] = resolved_delta;
        j["epsilon_select"] = resolved_select;
        j["bins"] = bins;
        j["binning"] = binning;
        j["truncate_length"] = truncate_length;
        j["max_across"] = max_across;
        j["clip"] = clip;
        j["m_candidates"] = m_candidates == 0 ? 2 * m_out : m_candidates;
        j["m_out"] = m_out;
        j["knn_k"] = knn_k;
        j["max_len"] = max_len;
        j["seed"] = seed;
        return j;
    }
};

struct ExperimentResult {
    Collection synthetic;
    PrivacyBudget budget;
    ZcdpLedger ledger;
    MetricReport report;
    nlohmann::ordered_json notes;
};

// Direct-mechanism synthesis path, shared by the CLI subcommand and
// run_experiment.
inline Collection synthesize_direct(const Collection& train, const ExperimentConfig& cfg,
                                    const PrivacyBudget& budget, ZcdpLedger& ledger,
                                    nlohmann::ordered_json& notes) {
    const SelectionVariant variant = cfg.method == "direct-across" ? SelectionVariant::Across
                                                                   : SelectionVariant::Markov;
    const Collection cohort = filter_truncate(train, cfg.truncate_length);
    if (cohort.tables.empty()) {
        throw std::invalid_argument("direct: no users remain after filtering to length " +
                                    std::to_string(cfg.truncate_length));
    }
    notes["direct_cohort_users"] = cohort.size();
    const FlatTable flat = flatten(cohort, cfg.truncate_length);
    const Discretizer disc =
        Discretizer::fit_flat(flat, cfg.bins, binning_method_from_string(cfg.binning));
    const std::size_t d = train.schema.size();
    const auto queries =
        select_marginals(d, cfg.truncate_length, variant, cfg.max_across, cfg.seed);
    const SigmaCalibration cal = calibrate_sigma(budget, queries.size());
    const auto measurements = measure(flat, disc, queries, cal.sigma, cfg.seed);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        std::string label = "marginal:";
        for (std::size_t i = 0; i < queries[q].columns.size(); ++i) {
            if (i > 0) label += "x";
            label += disc.schema().column(queries[q].columns[i]).name;
        }
        ledger.charge(label, BudgetPhase::Train, cal.rho_per_query, cal.sigma, 1.0);
    }
    if (variant == SelectionVariant::Across) {
        // Cross-feature marginals are measured and reported, but estimation
        // stays on the Markov factorization; the general graphical-model
        // estimator is out of scope.
        notes["across_note"] =
            "intra-step cross-feature marginals measured but not used by the Markov sampler";
    }
    const MarkovChainModel model = estimate_markov(measurements, disc, d, cfg.truncate_length);
    const FlatTable sampled =
        sample_flat(model, disc, train.schema, cfg.m_out, derive_seed(cfg.seed, hash_string("sample")));
    const UnflattenResult unflat = unflatten(sampled);
    notes["unflatten_dropped_users"] = unflat.dropped_users.size();
    Collection synthetic = unflat.collection;
    if (cfg.clip) {
        synthetic = clip_postprocess(synthetic, train);
        notes["clip_note"] =
            "values clipped to the [min, P99] range of the private reference; "
            "this post-process is not covered by the DP guarantee";
    }
    notes["preprocessing_note"] =
        "discretizer fit on the private data is charged no budget (budget-exempt preprocessing)";
    return synthetic;
}

inline Collection synthesize_dp_markov(const Collection& train, const ExperimentConfig& cfg,
                                       const PrivacyBudget& budget, ZcdpLedger& ledger,
                                       nlohmann::ordered_json& notes) {
    const DpMarkovBackend backend = train_dp_markov_backend(
        train, cfg.bins, budget, cfg.seed, binning_method_from_string(cfg.binning));
    for (const auto& e : backend.ledger().entries()) {
        ledger.charge(e.label, e.phase, e.rho, e.sigma, e.sensitivity);
    }
    std::size_t max_len = cfg.max_len;
    if (max_len == 0) {
        for (const auto& [id, table] : train.tables) max_len = std::max(max_len, table.length());
    }
    const std::size_t m_candidates = cfg.m_candidates == 0 ? 2 * cfg.m_out : cfg.m_candidates;
    const OverGenerateResult gen =
        over_generate(backend, train.schema, m_candidates, max_len,
                      derive_seed(cfg.seed, hash_string("generate")), 3, cfg.threads);
    nlohmann::ordered_json yield;
    yield["requested"] = gen.report.requested;
    yield["produced"] = gen.report.produced;
    yield["attempts"] = gen.report.attempts;
    yield["discarded"] = gen.report.discarded;
    yield["early_terminated"] = gen.report.early_terminated;
    notes["over_generate"] = yield;

    if (budget.epsilon_select > 0.0) {
        ReferenceEmbedder embedder(train.schema, cfg.seed);
        embedder.fit(train);
        const EmbeddingMatrix emb_real = embed_collection(embedder, train);
        const EmbeddingMatrix emb_cand = embed_collection(embedder, gen.candidates);
        const std::size_t m_out = std::min(cfg.m_out, emb_cand.rows.size());
        SelectionOptions opts;
        opts.threads = cfg.threads;
        const SelectionResult sel = private_knn_select(
            emb_real, emb_cand, cfg.knn_k, m_out, budget.epsilon_select, budget.delta,
            derive_seed(cfg.seed, hash_string("select")), opts);
        ledger.charge("knn_selection", BudgetPhase::Select, sel.rho, sel.sigma,
                      std::sqrt(static_cast<double>(cfg.knn_k)));
        Collection selected;
        selected.schema = train.schema;
        for (std::size_t idx : sel.selected) {
            const auto it = gen.candidates.tables.find(emb_cand.ids[idx]);
            selected.tables.emplace(it->first, it->second);
        }
        return selected;
    }

    // No selection budget: release the first m_out candidates.
    Collection out;
    out.schema = train.schema;
    for (const auto& [id, table] : gen.candidates.tables) {
        if (out.tables.size() >= cfg.m_out) break;
        out.tables.emplace(id, table);
    }
    return out;
}

// Runs one full experiment: train a synthesizer under the budget, release a
// synthetic collection, evaluate it, and write all artifacts. Deterministic
// given config + seed; aborts (BudgetError) before any data is written if
// the ledger would exceed the budget.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const Schema schema = read_schema_json(cfg.schema_json);
    const Collection train = read_collection_csv(cfg.train_csv, schema);
    const Collection test = read_collection_csv(cfg.test_csv, schema);
    if (train.tables.empty()) throw std::invalid_argument("run_experiment: empty training collection");

    const double n = static_cast<double>(train.size());
    const double delta = cfg.delta ? *cfg.delta : 1.0 / (n * n);
    const bool is_direct = cfg.method == "direct-markov" || cfg.method == "direct-across";
    const double eps_select =
        cfg.epsilon_select ? *cfg.epsilon_select
                           : (is_direct ? 0.0 : default_epsilon_select(cfg.epsilon_total));
    ExperimentResult result;
    result.budget = PrivacyBudget{cfg.epsilon_total, delta, eps_select};
    result.budget.validate();

    if (cfg.method == "dp-markov") {
        result.synthetic =
            synthesize_dp_markov(train, cfg, result.budget, result.ledger, result.notes);
    } else if (is_direct) {
        result.synthetic =
            synthesize_direct(train, cfg, result.budget, result.ledger, result.notes);
    } else {
        throw std::invalid_argument("run_experiment: unknown method '" + cfg.method + "'");
    }
    result.ledger.enforce(result.budget);

    EvaluateConfig eval = cfg.eval;
    eval.seed = cfg.seed;
    eval.threads = cfg.threads;
    if (cfg.hmm_spec_json) {
        eval.hmm_spec = HmmSpec::from_json(nlohmann::json::parse(read_text_file(*cfg.hmm_spec_json)));
    }
    result.report = evaluate(train, test, result.synthetic, eval);
    result.report.payload["config"] = cfg.echo(delta, eps_select);
    result.report.payload["ledger"] = result.ledger.to_json(result.budget);
    result.report.payload["notes"] = result.notes;

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    fs::create_directories(cfg.output_dir + "/plot_data");
    write_collection_csv(cfg.output_dir + "/synthetic.csv", result.synthetic);
    write_schema_json(cfg.output_dir + "/synthetic.schema.json", schema);
    write_text_file(cfg.output_dir + "/ledger.json",
                    result.ledger.to_json(result.budget).dump(2) + "\n");
    write_text_file(cfg.output_dir + "/report.json", result.report.dump());

    // Plot data: TDCR distance distributions as in the distance-histogram
    // figures, and likelihood histograms when an HMM spec is available.
    {
        const ScalingStats scaling = ScalingStats::fit(train);
        const auto synth_d = nearest_neighbor_distances(result.synthetic, train, scaling, cfg.threads);
        const auto test_d = nearest_neighbor_distances(test, train, scaling, cfg.threads);
        write_text_file(cfg.output_dir + "/plot_data/tdcr_distances.csv",
                        distances_csv(synth_d, test_d));
        write_text_file(cfg.output_dir + "/plot_data/tdcr_histogram.csv",
                        histogram_csv(synth_d, test_d, eval.tdcr_bins));
        if (eval.hmm_spec) {
            std::size_t excluded = 0;
            const auto real_ll = score_log_likelihoods(*eval.hmm_spec, test, &excluded, cfg.threads);
            const auto synth_ll =
                score_log_likelihoods(*eval.hmm_spec, result.synthetic, &excluded, cfg.threads);
            if (!real_ll.empty() && !synth_ll.empty()) {
                write_text_file(cfg.output_dir + "/plot_data/likelihood_histogram.csv",
                                histogram_csv(synth_ll, real_ll, eval.tdcr_bins));
            }
        }
    }
    return result;
}

}  // namespace longsynth
