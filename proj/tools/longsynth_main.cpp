#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "longsynth/accounting.hpp"
#include "longsynth/csv.hpp"
#include "longsynth/direct_synth.hpp"
#include "longsynth/evaluate.hpp"
#include "longsynth/experiment.hpp"
#include "longsynth/flatten.hpp"
#include "longsynth/generator.hpp"
#include "longsynth/hmm.hpp"
#include "longsynth/selection.hpp"
#include "longsynth/serialize.hpp"

namespace {

using namespace longsynth;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitBudget = 3;

LengthDistribution parse_lengths(const std::string& uniform_range, const std::string& lengths_json) {
    if (!lengths_json.empty()) {
        std::map<std::size_t, double> pmf;
        for (const auto& [key, value] : nlohmann::json::parse(lengths_json).items()) {
            pmf[static_cast<std::size_t>(std::stoull(key))] = value.get<double>();
        }
        return LengthDistribution(pmf);
    }
    const auto colon = uniform_range.find(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("expected --lengths LO:HI or --lengths-json");
    }
    return LengthDistribution::uniform(std::stoull(uniform_range.substr(0, colon)),
                                       std::stoull(uniform_range.substr(colon + 1)));
}

void cmd_hmm_gen(const std::string& spec_path, std::size_t n, const std::string& lengths,
                 const std::string& lengths_json, std::uint64_t seed, const std::string& output) {
    const HmmSpec spec = HmmSpec::from_json(nlohmann::json::parse(read_text_file(spec_path)));
    const LengthDistribution dist = parse_lengths(lengths, lengths_json);
    const Collection data = sample_collection(spec, n, dist, spec.categorical, seed);
    write_collection_csv(output, data);
    write_schema_json(output + ".schema.json", data.schema);
    std::cout << "wrote " << data.size() << " tables to " << output << "\n";
}

void cmd_flatten(const std::string& input, const std::string& schema_path, std::size_t length,
                 const std::string& output) {
    const Schema schema = read_schema_json(schema_path);
    const Collection data = read_collection_csv(input, schema);
    const Collection cohort = filter_truncate(data, length);
    const FlatTable flat = flatten(cohort, length);
    write_text_file(output, flat_to_csv(flat));
    write_schema_json(output + ".schema.json", flat.flat_schema);
    std::cout << "flattened " << flat.rows.size() << " users (of " << data.size()
              << ") to " << flat.flat_schema.size() << " columns\n";
}

void cmd_direct_synth(const std::string& input, const std::string& schema_path, std::size_t length,
                      const std::string& variant, double epsilon, double delta, double eps_select,
                      std::size_t bins, std::size_t max_across, bool clip, std::size_t n_out,
                      std::uint64_t seed, const std::string& output) {
    const Schema schema = read_schema_json(schema_path);
    const Collection train = read_collection_csv(input, schema);
    if (delta <= 0.0) {
        const double n = static_cast<double>(train.size());
        delta = 1.0 / (n * n);
    }
    ExperimentConfig cfg;
    cfg.method = selection_variant_from_string(variant) == SelectionVariant::Across
                     ? "direct-across"
                     : "direct-markov";
    cfg.epsilon_total = epsilon;
    cfg.delta = delta;
    cfg.epsilon_select = eps_select;
    cfg.bins = bins;
    cfg.truncate_length = length;
    cfg.max_across = max_across;
    cfg.clip = clip;
    cfg.m_out = n_out;
    cfg.seed = seed;

    PrivacyBudget budget{epsilon, delta, eps_select};
    budget.validate();
    ZcdpLedger ledger;
    nlohmann::ordered_json notes;
    const Collection synthetic = synthesize_direct(train, cfg, budget, ledger, notes);
    ledger.enforce(budget);
    write_collection_csv(output, synthetic);
    write_schema_json(output + ".schema.json", schema);
    nlohmann::ordered_json ledger_json = ledger.to_json(budget);
    ledger_json["notes"] = notes;
    write_text_file(output + ".ledger.json", ledger_json.dump(2) + "\n");
    std::cout << "wrote " << synthetic.size() << " synthetic tables to " << output
              << " (ledger: " << output << ".ledger.json)\n";
    if (clip) {
        std::cout << "note: clipping post-process uses private statistics and is not covered "
                     "by the DP guarantee\n";
    }
    std::cout << "note: discretizer fit on private data is budget-exempt preprocessing\n";
}

void cmd_train_backend(const std::string& input, const std::string& schema_path, std::size_t bins,
                       double epsilon, double delta, double eps_select, std::uint64_t seed,
                       const std::string& output) {
    const Schema schema = read_schema_json(schema_path);
    const Collection train = read_collection_csv(input, schema);
    if (delta <= 0.0) {
        const double n = static_cast<double>(train.size());
        delta = 1.0 / (n * n);
    }
    if (eps_select < 0.0) eps_select = default_epsilon_select(epsilon);
    PrivacyBudget budget{epsilon, delta, eps_select};
    budget.validate();
    const DpMarkovBackend backend = train_dp_markov_backend(train, bins, budget, seed);
    nlohmann::ordered_json model = backend.to_json();
    model["budget"] = {{"epsilon_total", epsilon}, {"delta", delta}, {"epsilon_select", eps_select}};
    write_text_file(output, model.dump(2) + "\n");
    std::cout << "trained dp-markov backend on " << train.size() << " users -> " << output << "\n";
}

void cmd_generate(const std::string& backend_name, const std::string& model_path, std::size_t n,
                  std::size_t max_len, std::uint64_t seed, const std::string& output,
                  unsigned threads) {
    if (backend_name != "markov") {
        throw std::invalid_argument("unknown backend '" + backend_name + "' (available: markov)");
    }
    const DpMarkovBackend backend =
        DpMarkovBackend::from_json(nlohmann::json::parse(read_text_file(model_path)));
    std::size_t limit = max_len;
    if (limit == 0) limit = backend.lengths().max_length();
    const OverGenerateResult gen =
        over_generate(backend, backend.schema(), n, limit, seed, 3, threads);
    write_collection_csv(output, gen.candidates);
    write_schema_json(output + ".schema.json", backend.schema());
    std::cout << "generated " << gen.report.produced << "/" << gen.report.requested << " tables in "
              << gen.report.attempts << " attempts (" << gen.report.discarded << " discarded, "
              << gen.report.early_terminated << " early-terminated)\n";
    if (gen.report.produced < gen.report.requested) {
        std::cout << "warning: yield below target after retry cap\n";
    }
}

void cmd_select(const std::string& real_path, const std::string& cand_path,
                const std::string& schema_path, std::size_t k, std::size_t m, double eps_select,
                double delta, std::uint64_t seed, const std::string& output, unsigned threads) {
    const Schema schema = read_schema_json(schema_path);
    const Collection real = read_collection_csv(real_path, schema);
    const Collection cand = read_collection_csv(cand_path, schema);
    if (delta <= 0.0) {
        const double n = static_cast<double>(real.size());
        delta = 1.0 / (n * n);
    }
    ReferenceEmbedder embedder(schema, seed);
    embedder.fit(real);
    const EmbeddingMatrix emb_real = embed_collection(embedder, real);
    const EmbeddingMatrix emb_cand = embed_collection(embedder, cand);
    SelectionOptions opts;
    opts.threads = threads;
    const SelectionResult sel =
        private_knn_select(emb_real, emb_cand, k, m, eps_select, delta, seed, opts);
    Collection out;
    out.schema = schema;
    for (std::size_t idx : sel.selected) {
        out.tables.emplace(emb_cand.ids[idx], cand.tables.at(emb_cand.ids[idx]));
    }
    write_collection_csv(output, out);
    nlohmann::ordered_json meta;
    meta["epsilon_select"] = eps_select;
    meta["delta"] = delta;
    meta["k"] = k;
    meta["rho_select"] = sel.rho;
    meta["sigma_select"] = sel.sigma;
    write_text_file(output + ".ledger.json", meta.dump(2) + "\n");
    std::cout << "selected " << out.size() << " of " << cand.size() << " candidates -> " << output << "\n";
}

void cmd_evaluate(const std::string& train_path, const std::string& test_path,
                  const std::string& synth_path, const std::string& schema_path,
                  const std::string& hmm_spec_path, const std::string& config_path,
                  std::uint64_t seed, const std::string& output, unsigned threads) {
    const Schema schema = read_schema_json(schema_path);
    const Collection train = read_collection_csv(train_path, schema);
    const Collection test = read_collection_csv(test_path, schema);
    const Collection synth = read_collection_csv(synth_path, schema);
    EvaluateConfig cfg;
    if (!config_path.empty()) {
        cfg = EvaluateConfig::from_json(nlohmann::json::parse(read_text_file(config_path)));
    }
    cfg.seed = seed;
    cfg.threads = threads;
    if (!hmm_spec_path.empty()) {
        cfg.hmm_spec = HmmSpec::from_json(nlohmann::json::parse(read_text_file(hmm_spec_path)));
    }
    const MetricReport report = evaluate(train, test, synth, cfg);
    write_text_file(output, report.dump());
    std::cout << report.payload["metrics"].dump(2) << "\n";
    std::cout << "wrote " << output << "\n";
}

void cmd_export_training(const std::string& input, const std::string& schema_path, double p_start,
                         std::uint64_t seed, const std::string& output) {
    const Schema schema = read_schema_json(schema_path);
    const Collection train = read_collection_csv(input, schema);
    write_text_file(output, training_examples_jsonl(train, p_start, seed));
    std::cout << "wrote " << train.size() << " training examples to " << output << "\n";
}

void cmd_demo_spurious() {
    // Equiprobable two-type source on a three-symbol row domain; the chain
    // factorization consistent with its adjacent-pair marginals places mass
    // on trajectories outside the source support.
    TrajectoryDistribution source;
    source[{"alpha", "gamma", "alpha"}] = 0.5;
    source[{"beta", "gamma", "beta"}] = 0.5;
    const TrajectoryDistribution result = maxent_two_local(source);

    std::cout << "Source distribution (L=3):\n";
    for (const auto& [traj, p] : source) {
        std::cout << "  (" << traj[0] << ", " << traj[1] << ", " << traj[2] << ")  " << p << "\n";
    }
    std::cout << "\nMaxEnt distribution from exact adjacent-pair marginals:\n";
    double spurious = 0.0;
    for (const auto& [traj, p] : result) {
        const bool in_support = source.count(traj) > 0;
        std::cout << "  (" << traj[0] << ", " << traj[1] << ", " << traj[2] << ")  " << p
                  << (in_support ? "" : "   <- spurious") << "\n";
        if (!in_support) spurious += p;
    }
    std::cout << "\nTotal spurious mass: " << spurious << "\n";
}

void cmd_plot_data(const std::string& train_path, const std::string& test_path,
                   const std::string& synth_path, const std::string& schema_path,
                   const std::string& hmm_spec_path, const std::string& lat_col,
                   const std::string& lon_col, double bin_width, std::size_t bins,
                   const std::string& output_dir, unsigned threads) {
    const Schema schema = read_schema_json(schema_path);
    const Collection train = read_collection_csv(train_path, schema);
    const Collection test = read_collection_csv(test_path, schema);
    const Collection synth = read_collection_csv(synth_path, schema);
    std::filesystem::create_directories(output_dir);

    const ScalingStats scaling = ScalingStats::fit(train);
    const auto synth_d = nearest_neighbor_distances(synth, train, scaling, threads);
    const auto test_d = nearest_neighbor_distances(test, train, scaling, threads);
    write_text_file(output_dir + "/tdcr_distances.csv", distances_csv(synth_d, test_d));
    write_text_file(output_dir + "/tdcr_histogram.csv", histogram_csv(synth_d, test_d, bins));
    std::cout << "wrote tdcr_distances.csv, tdcr_histogram.csv\n";

    if (!hmm_spec_path.empty()) {
        const HmmSpec spec =
            HmmSpec::from_json(nlohmann::json::parse(read_text_file(hmm_spec_path)));
        std::size_t excluded = 0;
        const auto real_ll = score_log_likelihoods(spec, test, &excluded, threads);
        const auto synth_ll = score_log_likelihoods(spec, synth, &excluded, threads);
        write_text_file(output_dir + "/likelihood_histogram.csv",
                        histogram_csv(synth_ll, real_ll, bins));
        std::cout << "wrote likelihood_histogram.csv\n";
    }
    if (!lat_col.empty() && !lon_col.empty()) {
        write_text_file(output_dir + "/density_grid_real.csv",
                        density_grid_csv(test, test, lat_col, lon_col, bin_width));
        write_text_file(output_dir + "/density_grid_synth.csv",
                        density_grid_csv(test, synth, lat_col, lon_col, bin_width));
        std::cout << "wrote density_grid_real.csv, density_grid_synth.csv\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthesis and evaluation toolkit for differentially private longitudinal "
                 "tabular data (user-level privacy)"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware concurrency)");

    // hmm-gen
    std::string spec_path;
    std::string lengths = "4:12";
    std::string lengths_json;
    std::size_t gen_n = 1000;
    std::uint64_t seed = 0;
    std::string output = "out.csv";
    auto* hmm_gen = app.add_subcommand("hmm-gen", "sample ground-truth data from an HMM spec");
    hmm_gen->add_option("--spec", spec_path, "HMM spec JSON")->required();
    hmm_gen->add_option("--n", gen_n, "number of tables");
    hmm_gen->add_option("--lengths", lengths, "uniform length range LO:HI");
    hmm_gen->add_option("--lengths-json", lengths_json, "length pmf as JSON object");
    hmm_gen->add_option("--seed", seed, "random seed");
    hmm_gen->add_option("--output", output, "output CSV path");

    // flatten
    std::string input;
    std::string schema_path;
    std::size_t length = 10;
    auto* flatten_cmd = app.add_subcommand("flatten", "filter/truncate to L and flatten to one row per user");
    flatten_cmd->add_option("--input", input, "input collection CSV")->required();
    flatten_cmd->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    flatten_cmd->add_option("--L", length, "window length")->required();
    flatten_cmd->add_option("--output", output, "output CSV path");

    // direct-synth
    std::string variant = "markov";
    double epsilon = 2.0;
    double delta = 0.0;
    double eps_select = 0.0;
    std::size_t bins = 32;
    std::size_t max_across = 80;
    bool clip = false;
    std::size_t n_out = 500;
    auto* direct = app.add_subcommand("direct-synth", "direct marginal mechanism on flattened data");
    direct->add_option("--input", input, "training collection CSV")->required();
    direct->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    direct->add_option("--L", length, "window length")->required();
    direct->add_option("--variant", variant, "markov | across");
    direct->add_option("--epsilon", epsilon, "total epsilon");
    direct->add_option("--delta", delta, "delta (default 1/n^2)");
    direct->add_option("--eps-select", eps_select, "selection epsilon reserved (default 0)");
    direct->add_option("--bins", bins, "bins per numeric column");
    direct->add_option("--max-across", max_across, "cap on sampled intra-step marginals");
    direct->add_flag("--clip", clip, "clip numeric outputs to [min, P99] of the private data");
    direct->add_option("--n", n_out, "number of synthetic tables");
    direct->add_option("--seed", seed, "random seed");
    direct->add_option("--output", output, "output CSV path");

    // train-backend
    auto* train_backend = app.add_subcommand("train-backend", "train the DP Markov generator backend");
    train_backend->add_option("--input", input, "training collection CSV")->required();
    train_backend->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    train_backend->add_option("--bins", bins, "bins per numeric column");
    train_backend->add_option("--epsilon", epsilon, "total epsilon");
    train_backend->add_option("--delta", delta, "delta (default 1/n^2)");
    double tb_eps_select = -1.0;
    train_backend->add_option("--eps-select", tb_eps_select,
                              "selection epsilon to reserve (default: budget-split schedule)");
    train_backend->add_option("--seed", seed, "random seed");
    train_backend->add_option("--output", output, "model JSON path");

    // generate
    std::string model_path;
    std::size_t max_len = 0;
    std::string backend_name = "markov";
    auto* generate = app.add_subcommand("generate", "autoregressive generation from a backend model");
    generate->add_option("--backend", backend_name, "backend kind (markov)");
    generate->add_option("--model", model_path, "backend model JSON")->required();
    generate->add_option("--n", gen_n, "number of tables");
    generate->add_option("--max-len", max_len, "max rows per table (0 = model max)");
    generate->add_option("--seed", seed, "random seed");
    generate->add_option("--output", output, "output CSV path");

    // select
    std::string real_path;
    std::string cand_path;
    std::size_t knn_k = 10;
    std::size_t m_out = 100;
    double sel_eps = 1.0;
    auto* select = app.add_subcommand("select", "private k-NN voting selection over candidates");
    select->add_option("--real", real_path, "real collection CSV")->required();
    select->add_option("--candidates", cand_path, "candidate collection CSV")->required();
    select->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    select->add_option("--k", knn_k, "nearest neighbors per real table");
    select->add_option("--m", m_out, "candidates to release")->required();
    select->add_option("--eps-select", sel_eps, "selection epsilon");
    select->add_option("--delta", delta, "delta (default 1/n^2)");
    select->add_option("--seed", seed, "random seed");
    select->add_option("--output", output, "output CSV path");

    // evaluate
    std::string train_path;
    std::string test_path;
    std::string synth_path;
    std::string hmm_spec_path;
    std::string config_path;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "run the fidelity metric suite");
    evaluate_cmd->add_option("--real-train", train_path, "real training CSV")->required();
    evaluate_cmd->add_option("--real-test", test_path, "held-out real CSV")->required();
    evaluate_cmd->add_option("--synth", synth_path, "synthetic CSV")->required();
    evaluate_cmd->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    evaluate_cmd->add_option("--hmm-spec", hmm_spec_path, "HMM spec for likelihood scoring");
    evaluate_cmd->add_option("--config", config_path, "metric config JSON");
    evaluate_cmd->add_option("--seed", seed, "random seed");
    evaluate_cmd->add_option("--output", output, "report JSON path");

    // export-training
    double p_start = 0.25;
    auto* export_training =
        app.add_subcommand("export-training", "emit dynamic-window training examples as JSON lines");
    export_training->add_option("--input", input, "training collection CSV")->required();
    export_training->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    export_training->add_option("--p-start", p_start, "probability of a from-scratch (k=0) example");
    export_training->add_option("--seed", seed, "random seed");
    export_training->add_option("--output", output, "output JSONL path");

    // demo-spurious
    app.add_subcommand("demo-spurious",
                       "show MaxEnt mass on invalid trajectories under 2-local marginals");

    // plot-data
    std::string lat_col;
    std::string lon_col;
    double bin_width = 0.01;
    std::size_t plot_bins = 50;
    auto* plot = app.add_subcommand("plot-data", "emit per-figure CSV data");
    plot->add_option("--real-train", train_path, "real training CSV")->required();
    plot->add_option("--real-test", test_path, "held-out real CSV")->required();
    plot->add_option("--synth", synth_path, "synthetic CSV")->required();
    plot->add_option("--schema", schema_path, "schema JSON sidecar")->required();
    plot->add_option("--hmm-spec", hmm_spec_path, "HMM spec for likelihood histograms");
    plot->add_option("--lat-col", lat_col, "latitude column for the density grid");
    plot->add_option("--lon-col", lon_col, "longitude column for the density grid");
    plot->add_option("--bin-width", bin_width, "density grid bin width");
    plot->add_option("--bins", plot_bins, "histogram bins");
    plot->add_option("--output", output, "output directory");

    // run-experiment
    auto* run = app.add_subcommand("run-experiment", "end-to-end pipeline from a config manifest");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    std::string out_dir;
    run->add_option("--output", out_dir, "output directory (overrides config)");
    std::int64_t run_seed = -1;
    run->add_option("--seed", run_seed, "seed (overrides config)");
    std::string run_method;
    run->add_option("--method", run_method, "method (overrides config)");
    double run_eps = -1.0;
    run->add_option("--epsilon", run_eps, "epsilon_total (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help / --version
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (hmm_gen->parsed()) {
            cmd_hmm_gen(spec_path, gen_n, lengths, lengths_json, seed, output);
        } else if (flatten_cmd->parsed()) {
            cmd_flatten(input, schema_path, length, output);
        } else if (direct->parsed()) {
            cmd_direct_synth(input, schema_path, length, variant, epsilon, delta, eps_select, bins,
                             max_across, clip, n_out, seed, output);
        } else if (train_backend->parsed()) {
            cmd_train_backend(input, schema_path, bins, epsilon, delta, tb_eps_select, seed, output);
        } else if (generate->parsed()) {
            cmd_generate(backend_name, model_path, gen_n, max_len, seed, output, threads);
        } else if (select->parsed()) {
            cmd_select(real_path, cand_path, schema_path, knn_k, m_out, sel_eps, delta, seed, output,
                       threads);
        } else if (evaluate_cmd->parsed()) {
            cmd_evaluate(train_path, test_path, synth_path, schema_path, hmm_spec_path, config_path,
                         seed, output, threads);
        } else if (export_training->parsed()) {
            cmd_export_training(input, schema_path, p_start, seed, output);
        } else if (app.get_subcommand("demo-spurious")->parsed()) {
            cmd_demo_spurious();
        } else if (plot->parsed()) {
            cmd_plot_data(train_path, test_path, synth_path, schema_path, hmm_spec_path, lat_col,
                          lon_col, bin_width, plot_bins, output, threads);
        } else if (run->parsed()) {
            ExperimentConfig cfg =
                ExperimentConfig::from_json(nlohmann::json::parse(read_text_file(config_path)));
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (run_seed >= 0) cfg.seed = static_cast<std::uint64_t>(run_seed);
            if (!run_method.empty()) cfg.method = run_method;
            if (run_eps > 0.0) cfg.epsilon_total = run_eps;
            cfg.threads = threads;
            const ExperimentResult result = run_experiment(cfg);
            std::cout << "experiment artifacts in " << cfg.output_dir << "\n";
            std::cout << result.report.payload["metrics"].dump(2) << "\n";
        }
    } catch (const longsynth::BudgetError& e) {
        std::cerr << "budget violation: " << e.what() << "\n";
        return kExitBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
