#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "longsynth/accounting.hpp"
#include "longsynth/csv.hpp"
#include "longsynth/direct_synth.hpp"
#include "longsynth/discretize.hpp"
#include "longsynth/hmm.hpp"
#include "longsynth/parallel.hpp"
#include "longsynth/serialize.hpp"

namespace longsynth {

// One generation session per synthetic table. next_step emits the next row
// as serialized text in the row format (the text may be malformed; the
// parser decides), or std::nullopt to stop.
class TableSession {
public:
    virtual ~TableSession() = default;
    virtual std::optional<std::string> next_step(const Schema& schema,
                                                 const std::vector<Row>& history,
                                                 RandomEngine& rng) = 0;
};

// Autoregressive table generator: conditions each row on the schema and the
// previously accepted rows. The fine-tuned-LLM slot implements this same
// interface.
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual const Schema& schema() const = 0;
    virtual std::unique_ptr<TableSession> start_table(RandomEngine& rng) const = 0;
};

// Desk-scale DP backend: per-column first-order chains over discretized
// codes plus a noisy length distribution, all measured with the Gaussian
// mechanism. Features are conditionally independent given the previous row,
// the same structural assumption the Direct baseline imposes.
class DpMarkovBackend final : public GeneratorBackend {
public:
    struct ColumnChain {
        std::vector<double> initial;
        std::vector<std::vector<double>> transition;  // [from][to], pooled over time
    };

    DpMarkovBackend() = default;
    DpMarkovBackend(Schema schema, Discretizer disc, std::vector<ColumnChain> chains,
                    LengthDistribution lengths, ZcdpLedger ledger)
        : schema_(std::move(schema)),
          disc_(std::move(disc)),
          chains_(std::move(chains)),
          lengths_(std::move(lengths)),
          ledger_(std::move(ledger)) {}

    const Schema& schema() const override { return schema_; }
    const Discretizer& discretizer() const { return disc_; }
    const std::vector<ColumnChain>& chains() const { return chains_; }
    const LengthDistribution& lengths() const { return lengths_; }
    const ZcdpLedger& ledger() const { return ledger_; }

    std::unique_ptr<TableSession> start_table(RandomEngine& rng) const override;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["schema"] = schema_to_json(schema_);
        j["discretizer"] = disc_.to_json();
        nlohmann::ordered_json chains = nlohmann::ordered_json::array();
        for (const auto& chain : chains_) {
            nlohmann::ordered_json c;
            c["initial"] = chain.initial;
            c["transition"] = chain.transition;
            chains.push_back(c);
        }
        j["chains"] = chains;
        nlohmann::ordered_json lengths;
        for (const auto& [len, p] : lengths_.pmf()) lengths[std::to_string(len)] = p;
        j["length_distribution"] = lengths;
        nlohmann::ordered_json ledger = nlohmann::ordered_json::array();
        for (const auto& e : ledger_.entries()) {
            nlohmann::ordered_json entry;
            entry["label"] = e.label;
            entry["phase"] = e.phase == BudgetPhase::Train ? "train" : "select";
            entry["rho"] = e.rho;
            entry["sigma"] = e.sigma;
            entry["sensitivity"] = e.sensitivity;
            ledger.push_back(entry);
        }
        j["ledger"] = ledger;
        return j;
    }

    static DpMarkovBackend from_json(const nlohmann::json& j) {
        DpMarkovBackend b;
        b.schema_ = schema_from_json(j.at("schema"));
        b.disc_ = Discretizer::from_json(j.at("discretizer"));
        for (const auto& c : j.at("chains")) {
            ColumnChain chain;
            chain.initial = c.at("initial").get<std::vector<double>>();
            chain.transition = c.at("transition").get<std::vector<std::vector<double>>>();
            b.chains_.push_back(std::move(chain));
        }
        std::map<std::size_t, double> pmf;
        for (const auto& [key, value] : j.at("length_distribution").items()) {
            pmf[static_cast<std::size_t>(std::stoull(key))] = value.get<double>();
        }
        b.lengths_ = LengthDistribution(std::move(pmf));
        for (const auto& e : j.at("ledger")) {
            b.ledger_.charge(e.at("label").get<std::string>(),
                             e.at("phase").get<std::string>() == "select" ? BudgetPhase::Select
                                                                          : BudgetPhase::Train,
                             e.at("rho").get<double>(), e.at("sigma").get<double>(),
                             e.at("sensitivity").get<double>());
        }
        return b;
    }

private:
    Schema schema_;
    Discretizer disc_;
    std::vector<ColumnChain> chains_;
    LengthDistribution lengths_;
    ZcdpLedger ledger_;
};

namespace detail {

class DpMarkovSession final : public TableSession {
public:
    DpMarkovSession(const DpMarkovBackend& backend, std::size_t target_length)
        : backend_(backend), target_length_(target_length) {}

    std::optional<std::string> next_step(const Schema& schema, const std::vector<Row>& history,
                                         RandomEngine& rng) override {
        if (history.size() >= target_length_) return std::nullopt;
        const Discretizer& disc = backend_.discretizer();
        Row row(schema.size(), Value::null());
        std::vector<std::size_t> prev_codes;
        if (!history.empty()) prev_codes = disc.encode_row(history.back());
        for (std::size_t c = 0; c < schema.size(); ++c) {
            const auto& chain = backend_.chains()[c];
            const std::size_t code = history.empty()
                                         ? rng.categorical(chain.initial)
                                         : rng.categorical(chain.transition[prev_codes[c]]);
            row[c] = disc.coder(c).decode(code);
        }
        return serialize_row(schema, row, history.size() + 1);
    }

private:
    const DpMarkovBackend& backend_;
    std::size_t target_length_;
};

}  // namespace detail

inline std::unique_ptr<TableSession> DpMarkovBackend::start_table(RandomEngine& rng) const {
    // Target length is drawn up front from the noisy length distribution.
    return std::make_unique<detail::DpMarkovSession>(*this, lengths_.sample(rng));
}

// Trains the stand-in backend with the same measurement machinery as the
// Direct mechanism: per-column initial code counts, per-step adjacent
// transition counts (pooled after noising), and one extra noised length
// histogram. Every query has L2 sensitivity 1 under add/remove-user
// adjacency, and the total rho charged covers all of them.
inline DpMarkovBackend train_dp_markov_backend(const Collection& collection, std::size_t bins,
                                               const PrivacyBudget& budget, std::uint64_t seed,
                                               BinningMethod method = BinningMethod::EqualWidth,
                                               std::optional<double> sigma_override = std::nullopt) {
    if (collection.tables.empty()) throw std::invalid_argument("train_dp_markov_backend: empty collection");
    const Schema& schema = collection.schema;
    const std::size_t d = schema.size();
    std::size_t max_len = 0;
    for (const auto& [id, table] : collection.tables) max_len = std::max(max_len, table.length());
    if (max_len < 1) throw std::invalid_argument("train_dp_markov_backend: no rows");

    const std::size_t num_queries = 1 + d + d * (max_len - 1);
    SigmaCalibration cal;
    if (sigma_override) {
        // Accounting bypass for diagnostics; rho reflects the actual noise.
        cal.sigma = *sigma_override;
        cal.rho_per_query = cal.sigma > 0.0 ? rho_of_gaussian(cal.sigma, 1.0) : 0.0;
        cal.rho_total = cal.rho_per_query * static_cast<double>(num_queries);
    } else {
        cal = calibrate_sigma(budget, num_queries);
    }
    ZcdpLedger ledger;

    // Pre-encode every table once.
    std::vector<std::vector<std::vector<std::size_t>>> codes;
    const Discretizer disc = Discretizer::fit_collection(collection, bins, method);
    codes.reserve(collection.tables.size());
    for (const auto& [id, table] : collection.tables) {
        std::vector<std::vector<std::size_t>> enc;
        enc.reserve(table.rows.size());
        for (const Row& row : table.rows) enc.push_back(disc.encode_row(row));
        codes.push_back(std::move(enc));
    }

    std::uint64_t query_index = 0;
    auto noise = [&](std::vector<double>& counts) {
        if (cal.sigma > 0.0) {
            RandomEngine rng(derive_seed(seed, query_index));
            for (double& v : counts) v += rng.normal(0.0, cal.sigma);
        }
        ++query_index;
    };

    // Length histogram over 1..max_len: each user contributes one count.
    std::vector<double> length_counts(max_len, 0.0);
    for (const auto& enc : codes) length_counts[enc.size() - 1] += 1.0;
    noise(length_counts);
    ledger.charge("length_histogram", BudgetPhase::Train, cal.rho_per_query, cal.sigma, 1.0);
    std::map<std::size_t, double> length_mass;
    for (std::size_t i = 0; i < max_len; ++i) {
        if (length_counts[i] > 0.0) length_mass[i + 1] = length_counts[i];
    }
    if (length_mass.empty()) length_mass[max_len] = 1.0;  // all counts noised away
    const LengthDistribution lengths = LengthDistribution::from_counts(length_mass);

    std::vector<DpMarkovBackend::ColumnChain> chains(d);
    for (std::size_t c = 0; c < d; ++c) {
        const std::size_t k = disc.coder(c).code_count();
        // Initial distribution: 1-way marginal of the first row.
        std::vector<double> initial(k, 0.0);
        for (const auto& enc : codes) initial[enc.front()[c]] += 1.0;
        noise(initial);
        ledger.charge("initial:" + schema.column(c).name, BudgetPhase::Train, cal.rho_per_query,
                      cal.sigma, 1.0);
        chains[c].initial = detail::clamp_normalize(std::move(initial));

        // Adjacent-step 2-way marginals, one per step over the users long
        // enough to contribute, noised individually then pooled.
        std::vector<double> pooled(k * k, 0.0);
        for (std::size_t t = 0; t + 1 < max_len; ++t) {
            std::vector<double> step(k * k, 0.0);
            for (const auto& enc : codes) {
                if (enc.size() > t + 1) step[enc[t][c] * k + enc[t + 1][c]] += 1.0;
            }
            noise(step);
            ledger.charge("transition:" + schema.column(c).name + ":t" + std::to_string(t + 1),
                          BudgetPhase::Train, cal.rho_per_query, cal.sigma, 1.0);
            for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i] += step[i];
        }
        chains[c].transition.reserve(k);
        for (std::size_t a = 0; a < k; ++a) {
            std::vector<double> row(pooled.begin() + static_cast<std::ptrdiff_t>(a * k),
                                    pooled.begin() + static_cast<std::ptrdiff_t>((a + 1) * k));
            chains[c].transition.push_back(detail::clamp_normalize(std::move(row)));
        }
    }

    if (!sigma_override) ledger.enforce(budget);
    return DpMarkovBackend(schema, disc, std::move(chains), lengths, std::move(ledger));
}

struct GenerationResult {
    UserTable table;
    ParseReport report;
    bool discarded = false;  // no row was accepted
};

// Drives one backend session: emit a row, parse and validate it, keep the
// accepted prefix. An invalid row terminates the table early; reaching the
// stop signal or max_len completes it.
inline GenerationResult generate_table(const GeneratorBackend& backend, const Schema& schema,
                                       std::size_t max_len, const std::string& user_id,
                                       std::uint64_t seed) {
    if (max_len < 1) throw std::invalid_argument("generate_table: max_len must be >= 1");
    GenerationResult result;
    result.table.user_id = user_id;
    RandomEngine rng(seed);
    const auto session = backend.start_table(rng);
    while (result.table.rows.size() < max_len) {
        const auto text = session->next_step(schema, result.table.rows, rng);
        if (!text) break;
        auto [row, outcome] = parse_row(*text, schema, result.table.rows, nullptr);
        result.report.outcomes.push_back(outcome);
        if (!row) {
            result.report.early_terminated = true;
            result.report.terminated_row = result.table.rows.size() + 1;
            break;
        }
        result.table.rows.push_back(std::move(*row));
    }
    result.discarded = result.table.rows.empty();
    return result;
}

struct OverGenerateReport {
    std::size_t requested = 0;
    std::size_t produced = 0;
    std::size_t attempts = 0;
    std::size_t discarded = 0;
    std::size_t early_terminated = 0;
};

struct OverGenerateResult {
    Collection candidates;
    OverGenerateReport report;
};

// Over-generation consumes no privacy budget. Discarded tables are replaced
// by fresh attempts up to a retry cap of retry_factor * m total attempts;
// each attempt's randomness depends only on (seed, attempt index), so
// results are identical for any thread count.
inline OverGenerateResult over_generate(const GeneratorBackend& backend, const Schema& schema,
                                        std::size_t m_candidates, std::size_t max_len,
                                        std::uint64_t seed, std::size_t retry_factor = 3,
                                        unsigned threads = 0) {
    if (m_candidates < 1) throw std::invalid_argument("over_generate: m_candidates must be >= 1");
    OverGenerateResult result;
    result.candidates.schema = schema;
    result.report.requested = m_candidates;
    const std::size_t attempt_cap = std::max<std::size_t>(retry_factor, 1) * m_candidates;

    int width = 1;
    for (std::size_t v = attempt_cap; v >= 10; v /= 10) ++width;
    std::size_t next_attempt = 0;
    while (result.report.produced < m_candidates && next_attempt < attempt_cap) {
        const std::size_t missing = m_candidates - result.report.produced;
        const std::size_t wave = std::min(missing, attempt_cap - next_attempt);
        std::vector<GenerationResult> outcomes(wave);
        parallel_for(
            wave,
            [&](std::size_t i) {
                const std::size_t attempt = next_attempt + i;
                std::string id(static_cast<std::size_t>(width), '0');
                const std::string digits = std::to_string(attempt);
                id.replace(id.size() - digits.size(), digits.size(), digits);
                outcomes[i] = generate_table(backend, schema, max_len, "synth_" + id,
                                             derive_seed(seed, attempt));
            },
            threads);
        for (auto& outcome : outcomes) {
            ++result.report.attempts;
            if (outcome.report.early_terminated) ++result.report.early_terminated;
            if (outcome.discarded) {
                ++result.report.discarded;
                continue;
            }
            if (result.report.produced < m_candidates) {
                result.candidates.tables.emplace(outcome.table.user_id, std::move(outcome.table));
                ++result.report.produced;
            }
        }
        next_attempt += wave;
    }
    return result;
}

}  // namespace longsynth
