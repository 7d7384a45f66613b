// Acceptance suite: one pass/fail line per release criterion, exit code 0
// only when every criterion holds at its stated tolerance.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "longsynth/accounting.hpp"
#include "longsynth/csv.hpp"
#include "longsynth/direct_synth.hpp"
#include "longsynth/evaluate.hpp"
#include "longsynth/experiment.hpp"
#include "longsynth/flatten.hpp"
#include "longsynth/generator.hpp"
#include "longsynth/hmm.hpp"
#include "longsynth/metrics.hpp"
#include "longsynth/selection.hpp"
#include "longsynth/serialize.hpp"

#include "test_support.hpp"

using namespace longsynth;

namespace {

int g_failures = 0;

class Criterion {
public:
    explicit Criterion(std::string name) : name_(std::move(name)), start_(clock_::now()) {}

    void check(bool ok, const std::string& detail) {
        if (!ok) {
            ok_ = false;
            details_.push_back(detail);
        }
    }

    void finish() {
        const double secs =
            std::chrono::duration<double>(clock_::now() - start_).count();
        std::printf("[%s] %-72s (%.2fs)\n", ok_ ? "PASS" : "FAIL", name_.c_str(), secs);
        for (const std::string& d : details_) std::printf("       %s\n", d.c_str());
        if (!ok_) ++g_failures;
    }

    double seconds() const {
        return std::chrono::duration<double>(clock_::now() - start_).count();
    }

private:
    using clock_ = std::chrono::steady_clock;
    std::string name_;
    clock_::time_point start_;
    bool ok_ = true;
    std::vector<std::string> details_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------

void criterion_1_spurious_demo() {
    Criterion c("1. MaxEnt proposition demo: 0.25 on the mixed trajectory, 0.50 spurious mass");
    TrajectoryDistribution source;
    source[{"alpha", "gamma", "alpha"}] = 0.5;
    source[{"beta", "gamma", "beta"}] = 0.5;
    const TrajectoryDistribution out = maxent_two_local(source);
    const double mixed = out.count({"alpha", "gamma", "beta"}) ? out.at({"alpha", "gamma", "beta"}) : -1.0;
    double spurious = 0.0;
    for (const auto& [traj, p] : out) {
        if (!source.count(traj)) spurious += p;
    }
    c.check(std::abs(mixed - 0.25) <= 1e-12, "mixed trajectory mass = " + fmt(mixed));
    c.check(std::abs(spurious - 0.5) <= 1e-12, "spurious mass = " + fmt(spurious));
    c.check(c.seconds() < 1.0, "runtime exceeded 1s");
    c.finish();
}

double dtw_backward_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<double> memo(n * m, -1.0);
    std::function<double(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> double {
        const double cost = std::abs(a[i] - b[j]);
        if (i == n - 1 && j == m - 1) return cost;
        double& slot = memo[i * m + j];
        if (slot >= 0.0) return slot;
        double best = std::numeric_limits<double>::infinity();
        if (i + 1 < n && j + 1 < m) best = std::min(best, go(i + 1, j + 1));
        if (i + 1 < n) best = std::min(best, go(i + 1, j));
        if (j + 1 < m) best = std::min(best, go(i, j + 1));
        slot = cost + best;
        return slot;
    };
    return go(0, 0);
}

void criterion_2_dtw_golden() {
    Criterion c("2. DTW golden value 25.0 on the worked sequences, oracle-confirmed");
    const std::vector<double> x{80, 81, 82, 85, 83, 84, 88, 92, 90, 87};
    const std::vector<double> y{82, 83, 83, 84, 86, 89, 93, 93, 91, 89, 88, 99};
    const double oracle = dtw_backward_oracle(x, y);
    c.check(oracle == 25.0, "independent oracle disagrees: " + fmt(oracle));
    const double got = dtw(x, y).total;
    c.check(got == oracle, "implementation = " + fmt(got) + ", oracle = " + fmt(oracle));
    c.finish();
}

void criterion_3_forward_vs_enumeration() {
    Criterion c("3. HMM forward equals path enumeration on 100 random specs (<=1e-9)");
    RandomEngine rng(20240601);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const HmmSpec spec = longsynth::testing::random_hmm_spec(rng, 3, 3);
        const Schema schema = hmm_schema(spec, std::nullopt);
        const std::size_t len = 1 + rng.uniform_below(5);
        const Collection sample =
            sample_collection(spec, 1, LengthDistribution::uniform(len, len), std::nullopt,
                              static_cast<std::uint64_t>(trial) + 7000);
        const UserTable& t = sample.tables.begin()->second;
        const double fwd = forward_log_likelihood(spec, schema, t);
        const double oracle = longsynth::testing::enumeration_log_likelihood(spec, schema, t);
        worst = std::max(worst, std::abs(fwd - oracle));
    }
    c.check(worst <= 1e-9, "worst |forward - enumeration| = " + fmt(worst));
    c.check(c.seconds() < 10.0, "runtime exceeded 10s");
    c.finish();
}

void criterion_4_roundtrips() {
    Criterion c("4. Roundtrips: 1000 serialize/parse (all key-value), 1000 flatten/unflatten");
    RandomEngine rng(424242);
    std::size_t keyvalue_rows = 0;
    std::size_t total_rows = 0;
    bool serialize_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const Schema schema = longsynth::testing::random_schema(rng);
        const UserTable t = longsynth::testing::random_table(schema, rng, "u", 1, 5);
        const ParseResult back = parse(serialize(schema, t).text, schema);
        serialize_ok = serialize_ok && back.report.complete() && back.table.rows == t.rows;
        total_rows += t.rows.size();
        for (const RowOutcome o : back.report.outcomes) {
            if (o == RowOutcome::KeyValue) ++keyvalue_rows;
        }
    }
    c.check(serialize_ok, "a serialize/parse roundtrip failed");
    c.check(keyvalue_rows == total_rows,
            "key-value rows " + std::to_string(keyvalue_rows) + "/" + std::to_string(total_rows));

    bool flatten_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const Collection col = longsynth::testing::random_collection(rng, 4, 5);
        std::size_t max_len = 0;
        for (const auto& [id, t] : col.tables) max_len = std::max(max_len, t.length());
        const UnflattenResult back = unflatten(flatten(col, max_len + rng.uniform_below(3)));
        flatten_ok = flatten_ok && back.dropped_users.empty() && back.collection.tables == col.tables;
    }
    c.check(flatten_ok, "a flatten/unflatten roundtrip failed");
    c.finish();
}

void criterion_5_accounting() {
    Criterion c("5. Privacy accounting: composed rho ledgers reproduce every budget split (<=1e-9)");
    const double n = 2000.0;
    const double delta = 1.0 / (n * n);
    const std::pair<double, double> splits[] = {{0.5, 0.25}, {2.0, 0.5}, {4.0, 1.0}, {10.0, 1.0}};
    for (const auto& [eps_total, eps_select] : splits) {
        PrivacyBudget budget{eps_total, delta, eps_select};
        budget.validate();
        ZcdpLedger ledger;
        const std::size_t queries = 171;
        const SigmaCalibration cal = calibrate_sigma(budget, queries);
        for (std::size_t q = 0; q < queries; ++q) {
            ledger.charge("m" + std::to_string(q), BudgetPhase::Train, cal.rho_per_query, cal.sigma, 1.0);
        }
        const double rho_select = rho_from_epsilon(eps_select, delta);
        ledger.charge("selection", BudgetPhase::Select, rho_select,
                      gaussian_sigma(rho_select, std::sqrt(10.0)), std::sqrt(10.0));
        const double recomputed = ledger.epsilon_claim(delta);
        c.check(std::abs(recomputed - eps_total) <= 1e-9,
                "eps_total " + fmt(eps_total) + " recomputed as " + fmt(recomputed));
        bool enforced = true;
        try {
            ledger.enforce(budget);
        } catch (...) {
            enforced = false;
        }
        c.check(enforced, "ledger enforcement rejected a valid split");
    }
    c.finish();
}

struct AcceptanceData {
    HmmSpec spec;
    Collection train;
    Collection test;
};

AcceptanceData load_acceptance_data() {
    AcceptanceData data;
    data.spec = HmmSpec::from_json(
        nlohmann::json::parse(read_text_file(std::string(LONGSYNTH_SOURCE_DIR) +
                                             "/data/acceptance_hmm.json")));
    const LengthDistribution lengths = LengthDistribution::uniform(4, 12);
    data.train = sample_collection(data.spec, 2000, lengths, data.spec.categorical, 11);
    data.test = sample_collection(data.spec, 500, lengths, data.spec.categorical, 12);
    // Distinct id spaces for train and test.
    Collection renamed;
    renamed.schema = data.test.schema;
    for (const auto& [id, t] : data.test.tables) {
        UserTable copy = t;
        copy.user_id = "held_" + id;
        renamed.tables.emplace(copy.user_id, std::move(copy));
    }
    data.test = std::move(renamed);
    return data;
}

void criterion_6_end_to_end(const AcceptanceData& data) {
    Criterion c("6. Desk-scale end-to-end: noise monotonicity + temporal fidelity vs shuffled control");
    const double n = static_cast<double>(data.train.size());
    const double delta = 1.0 / (n * n);
    const std::size_t seeds = 5;

    // (a) Direct-Markov transition divergence: mean error at eps=10 must not
    // exceed the mean at eps=0.5.
    const std::size_t direct_L = 8;
    const Collection cohort = filter_truncate(data.train, direct_L);
    const FlatTable flat = flatten(cohort, direct_L);
    const std::size_t d = data.train.schema.size();
    const auto queries = select_marginals(d, direct_L, SelectionVariant::Markov, 0, 0);
    auto direct_divergence = [&](double epsilon, std::uint64_t seed) {
        PrivacyBudget budget{epsilon, delta, 0.0};
        const Discretizer disc = Discretizer::fit_flat(flat, 32, BinningMethod::EqualWidth);
        const SigmaCalibration cal = calibrate_sigma(budget, queries.size());
        const auto measurements = measure(flat, disc, queries, cal.sigma, seed);
        const MarkovChainModel model = estimate_markov(measurements, disc, d, direct_L);
        const FlatTable sampled =
            sample_flat(model, disc, data.train.schema, 500, derive_seed(seed, 1));
        const Collection synth = unflatten(sampled).collection;
        return transition_divergence(data.test, synth, 5).average;
    };
    double mean_hi = 0.0;
    double mean_lo = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        mean_hi += direct_divergence(10.0, 100 + s) / static_cast<double>(seeds);
        mean_lo += direct_divergence(0.5, 100 + s) / static_cast<double>(seeds);
    }
    c.check(mean_hi <= mean_lo, "(a) direct transition divergence: eps=10 -> " + fmt(mean_hi) +
                                    ", eps=0.5 -> " + fmt(mean_lo));

    // (b,c) DpMarkov backend vs a row-shuffled control with identical
    // marginals: temporal metrics must prefer the order-preserving output.
    const ScalingStats scaling = ScalingStats::fit(data.train);
    const std::vector<double> test_distances =
        nearest_neighbor_distances(data.test, data.train, scaling);
    double jsd_model = 0.0;
    double jsd_control = 0.0;
    double ll_model = 0.0;
    double ll_control = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        PrivacyBudget budget{10.0, delta, 0.0};
        const DpMarkovBackend backend =
            train_dp_markov_backend(data.train, 16, budget, 500 + s);
        const OverGenerateResult gen = over_generate(backend, data.train.schema, 500, 12,
                                                     derive_seed(900, s));
        const Collection& synth = gen.candidates;
        const Collection control = shuffle_rows_within_tables(synth, derive_seed(901, s));

        const auto synth_distances = nearest_neighbor_distances(synth, data.train, scaling);
        const auto control_distances = nearest_neighbor_distances(control, data.train, scaling);
        jsd_model += tdcr_jsd_from_distances(synth_distances, test_distances, 50) /
                     static_cast<double>(seeds);
        jsd_control += tdcr_jsd_from_distances(control_distances, test_distances, 50) /
                       static_cast<double>(seeds);

        ll_model += likelihood_divergence(data.spec, data.test, synth).w1 /
                    static_cast<double>(seeds);
        ll_control += likelihood_divergence(data.spec, data.test, control).w1 /
                      static_cast<double>(seeds);
    }
    c.check(jsd_model < jsd_control, "(b) TDCR-JSD: model " + fmt(jsd_model) + " vs shuffled control " +
                                         fmt(jsd_control));
    c.check(ll_model < ll_control, "(c) likelihood W1: model " + fmt(ll_model) +
                                       " vs shuffled control " + fmt(ll_control));
    std::printf("       [info] 6a direct divergence eps10=%s eps0.5=%s | 6b jsd model=%s control=%s"
                " | 6c ll model=%s control=%s\n",
                fmt(mean_hi).c_str(), fmt(mean_lo).c_str(), fmt(jsd_model).c_str(),
                fmt(jsd_control).c_str(), fmt(ll_model).c_str(), fmt(ll_control).c_str());
    c.check(c.seconds() < 300.0, "runtime exceeded 5 minutes");
    c.finish();
}

void criterion_7_metric_properties() {
    Criterion c("7. Metric unit properties (JSD, W1, transitions, MAUVE, classifier)");
    const std::vector<double> p{0.4, 0.6};
    c.check(jensen_shannon_distance(p, p) == 0.0, "JSD(P,P) != 0");
    const std::vector<double> q_hist{0.9, 0.1};
    const double jsd_val = jensen_shannon_distance(p, q_hist);
    c.check(jsd_val >= 0.0 && jsd_val <= 1.0, "JSD out of [0,1]");

    const double w1 = wasserstein1(std::vector<double>{0, 1, 2}, std::vector<double>{1, 2, 3});
    c.check(std::abs(w1 - 1.0) <= 1e-12, "unit shift W1 = " + fmt(w1));

    Collection real;
    real.schema = Schema({{"v", ColumnKind::Numeric, {}, false}});
    RandomEngine rng(77);
    for (int u = 0; u < 40; ++u) {
        UserTable t;
        t.user_id = "u" + std::to_string(u);
        double x = rng.normal();
        for (int r = 0; r < 6; ++r) {
            x += rng.normal();
            t.rows.push_back({Value::numeric(x)});
        }
        real.insert(std::move(t));
    }
    c.check(transition_divergence(real, real, 5).average == 0.0,
            "transition divergence of identical collections != 0");

    std::vector<std::vector<double>> emb(120, std::vector<double>(4));
    for (auto& row : emb) {
        for (double& v : row) v = rng.normal();
    }
    const double self_mauve = mauve(emb, emb, 12, 5.0, 99, 3);
    c.check(self_mauve >= 0.99, "mauve(P,P) = " + fmt(self_mauve));

    int in_range = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        RandomEngine g(derive_seed(31, seed));
        auto block = [&](std::size_t count) {
            std::vector<std::vector<double>> out(count, std::vector<double>(5));
            for (auto& row : out) {
                for (double& v : row) v = g.normal();
            }
            return out;
        };
        const double auc = classifier_auc(block(1000), block(1000), 0.7, seed);
        if (auc >= 0.4 && auc <= 0.6) ++in_range;
    }
    c.check(in_range >= 19, "same-distribution AUC in [0.4,0.6] for " + std::to_string(in_range) +
                                "/20 seeds");
    c.finish();
}

void criterion_8_selection() {
    Criterion c("8. Private selection: exact sqrt(k) sensitivity, exact top-m at sigma 0, k=10 default");
    RandomEngine rng(88);
    auto points = [&](std::size_t n, double center) {
        std::vector<std::vector<double>> out(n, std::vector<double>(4));
        for (auto& row : out) {
            for (double& v : row) v = center + rng.normal();
        }
        return out;
    };
    const auto cand = points(40, 0.0);
    for (const std::size_t k : {1u, 10u}) {
        const auto real = points(25, 0.0);
        auto votes_for = [&](const std::vector<std::vector<double>>& reals) {
            std::vector<double> votes(cand.size(), 0.0);
            for (const auto& r : reals) {
                for (std::size_t i : k_nearest(cand, r, k)) votes[i] += 1.0;
            }
            return votes;
        };
        const auto all = votes_for(real);
        auto fewer = real;
        fewer.pop_back();
        const auto without = votes_for(fewer);
        double l2 = 0.0;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            l2 += (all[i] - without[i]) * (all[i] - without[i]);
        }
        c.check(std::abs(std::sqrt(l2) - std::sqrt(static_cast<double>(k))) <= 1e-12,
                "k=" + std::to_string(k) + " vote sensitivity = " + fmt(std::sqrt(l2)));
    }

    EmbeddingMatrix real_m;
    real_m.rows = points(30, 0.0);
    EmbeddingMatrix cand_m;
    cand_m.rows = points(50, 0.0);
    for (std::size_t i = 0; i < real_m.rows.size(); ++i) real_m.ids.push_back("r" + std::to_string(i));
    for (std::size_t i = 0; i < cand_m.rows.size(); ++i) cand_m.ids.push_back("c" + std::to_string(i));
    SelectionOptions opts;
    opts.sigma_override = 0.0;
    const SelectionResult sel = private_knn_select(real_m, cand_m, 5, 12, 0.0, 1e-6, 0, opts);
    std::vector<std::size_t> order(cand_m.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sel.votes[a] != sel.votes[b]) return sel.votes[a] > sel.votes[b];
        return a < b;
    });
    c.check(sel.selected == std::vector<std::size_t>(order.begin(), order.begin() + 12),
            "sigma=0 selection is not the exact top-m");

    const ExperimentConfig defaults;
    c.check(defaults.knn_k == 10, "default voting k is not 10");
    c.finish();
}

void criterion_9_determinism(const AcceptanceData& data) {
    Criterion c("9. Determinism: byte-identical reports across thread counts");
    Collection small_train;
    small_train.schema = data.train.schema;
    for (const auto& [id, t] : data.train.tables) {
        if (small_train.size() >= 150) break;
        small_train.tables.emplace(id, t);
    }
    Collection small_test;
    small_test.schema = data.test.schema;
    for (const auto& [id, t] : data.test.tables) {
        if (small_test.size() >= 80) break;
        small_test.tables.emplace(id, t);
    }
    EvaluateConfig cfg;
    cfg.seed = 9;
    cfg.hmm_spec = data.spec;
    cfg.threads = 1;
    const std::string one = evaluate(small_train, small_test, small_test, cfg).dump();
    cfg.threads = 8;
    const std::string eight = evaluate(small_train, small_test, small_test, cfg).dump();
    cfg.threads = 3;
    const std::string three = evaluate(small_train, small_test, small_test, cfg).dump();
    c.check(one == eight, "1-thread and 8-thread reports differ");
    c.check(one == three, "1-thread and 3-thread reports differ");

    // Full pipeline: two runs with the same config and seed, different
    // thread counts, must release byte-identical report and ledger files.
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "longsynth_acceptance_exp";
    fs::remove_all(base);
    fs::create_directories(base);
    write_collection_csv((base / "train.csv").string(), small_train);
    write_collection_csv((base / "test.csv").string(), small_test);
    write_schema_json((base / "schema.json").string(), small_train.schema);
    ExperimentConfig ecfg;
    ecfg.train_csv = (base / "train.csv").string();
    ecfg.test_csv = (base / "test.csv").string();
    ecfg.schema_json = (base / "schema.json").string();
    ecfg.method = "dp-markov";
    ecfg.epsilon_total = 2.0;
    ecfg.bins = 8;
    ecfg.m_out = 40;
    ecfg.m_candidates = 80;
    ecfg.seed = 13;
    ecfg.output_dir = (base / "run_a").string();
    ecfg.threads = 1;
    run_experiment(ecfg);
    ecfg.output_dir = (base / "run_b").string();
    ecfg.threads = 8;
    run_experiment(ecfg);
    const std::string report_a = read_text_file((base / "run_a/report.json").string());
    const std::string report_b = read_text_file((base / "run_b/report.json").string());
    const std::string ledger_a = read_text_file((base / "run_a/ledger.json").string());
    const std::string ledger_b = read_text_file((base / "run_b/ledger.json").string());
    c.check(report_a == report_b, "run_experiment reports differ across thread counts");
    c.check(ledger_a == ledger_b, "run_experiment ledgers differ across thread counts");
    fs::remove_all(base);
    c.finish();
}

}  // namespace

int main() {
    std::printf("longsynth acceptance suite\n");
    criterion_1_spurious_demo();
    criterion_2_dtw_golden();
    criterion_3_forward_vs_enumeration();
    criterion_4_roundtrips();
    criterion_5_accounting();
    const AcceptanceData data = load_acceptance_data();
    criterion_6_end_to_end(data);
    criterion_7_metric_properties();
    criterion_8_selection();
    criterion_9_determinism(data);
    if (g_failures > 0) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
