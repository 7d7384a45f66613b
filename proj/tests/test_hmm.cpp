#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "longsynth/csv.hpp"
#include "longsynth/hmm.hpp"
#include "longsynth/metrics.hpp"

#include "test_support.hpp"

using namespace longsynth;
using longsynth::testing::enumeration_log_likelihood;
using longsynth::testing::random_hmm_spec;

namespace {

HmmSpec single_state_standard_normal() {
    HmmSpec spec;
    spec.features = {"f0"};
    spec.pi = {1.0};
    spec.transition = Eigen::MatrixXd::Ones(1, 1);
    spec.means = {Eigen::VectorXd::Zero(1)};
    spec.covariances = {Eigen::MatrixXd::Identity(1, 1)};
    spec.validate();
    return spec;
}

UserTable table_of_values(const std::vector<double>& values, const std::string& id = "u") {
    UserTable t;
    t.user_id = id;
    for (double v : values) t.rows.push_back({Value::numeric(v)});
    return t;
}

}  // namespace

TEST_CASE("single gaussian log density is analytic") {
    const HmmSpec spec = single_state_standard_normal();
    const Schema schema({{"f0", ColumnKind::Numeric, {}, false}});
    const double ll = forward_log_likelihood(spec, schema, table_of_values({0.0}));
    CHECK(ll == Catch::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("length-1 forward equals the initial mixture density") {
    RandomEngine rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const HmmSpec spec = random_hmm_spec(rng);
        const Schema schema = hmm_schema(spec, std::nullopt);
        UserTable t{"u", {}};
        Row row{Value::numeric(0)};
        Eigen::VectorXd x(spec.num_features());
        for (std::size_t f = 0; f < spec.num_features(); ++f) {
            x(f) = rng.normal(0.0, 2.0);
            row.push_back(Value::numeric(x(f)));
        }
        t.rows.push_back(row);
        double mixture = 0.0;
        for (std::size_t s = 0; s < spec.num_states(); ++s) {
            const Eigen::MatrixXd inv = spec.covariances[s].inverse();
            const Eigen::VectorXd d = x - spec.means[s];
            const double log_density =
                -0.5 * (static_cast<double>(spec.num_features()) * std::log(2.0 * M_PI) +
                        std::log(spec.covariances[s].determinant()) + d.dot(inv * d));
            mixture += spec.pi[s] * std::exp(log_density);
        }
        const double forward = std::exp(forward_log_likelihood(spec, schema, t));
        CHECK(forward == Catch::Approx(mixture).epsilon(1e-10));
    }
}

TEST_CASE("two-state forward equals brute-force path enumeration") {
    RandomEngine rng(17);
    HmmSpec spec = random_hmm_spec(rng, 2, 2);
    while (spec.num_states() != 2) spec = random_hmm_spec(rng, 2, 2);
    const Schema schema = hmm_schema(spec, std::nullopt);
    const Collection sample = sample_collection(spec, 4, LengthDistribution::uniform(3, 3),
                                                std::nullopt, 99);
    for (const auto& [id, t] : sample.tables) {
        const double fwd = forward_log_likelihood(spec, schema, t);
        const double oracle = enumeration_log_likelihood(spec, schema, t);
        CHECK(std::abs(fwd - oracle) <= 1e-9);
    }
}

TEST_CASE("forward vs enumeration over randomized specs") {
    RandomEngine rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const HmmSpec spec = random_hmm_spec(rng);
        const Schema schema = hmm_schema(spec, std::nullopt);
        const std::size_t len = 1 + rng.uniform_below(5);
        const Collection sample =
            sample_collection(spec, 1, LengthDistribution::uniform(len, len), std::nullopt, trial);
        const UserTable& t = sample.tables.begin()->second;
        const double fwd = forward_log_likelihood(spec, schema, t);
        const double oracle = enumeration_log_likelihood(spec, schema, t);
        CHECK(std::abs(fwd - oracle) <= 1e-9);
    }
}

TEST_CASE("absorbing start scores as repeated state-0 densities") {
    HmmSpec spec;
    spec.features = {"f0"};
    spec.pi = {1.0, 0.0};
    spec.transition = Eigen::MatrixXd::Identity(2, 2);
    spec.means = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 50.0)};
    spec.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
    spec.validate();
    const Schema schema({{"f0", ColumnKind::Numeric, {}, false}});
    const std::vector<double> values{0.3, -0.7, 1.1};
    double expected = 0.0;
    for (double v : values) expected += -0.5 * std::log(2.0 * M_PI) - 0.5 * v * v;
    const double ll = forward_log_likelihood(spec, schema, table_of_values(values));
    CHECK(ll == Catch::Approx(expected).epsilon(1e-12));

    // Sampling from the same spec only ever visits state 0.
    const Collection sample =
        sample_collection(spec, 20, LengthDistribution::uniform(4, 4), std::nullopt, 1);
    for (const auto& [id, t] : sample.tables) {
        for (const Row& row : t.rows) {
            CHECK(std::abs(row[1].number()) < 10.0);  // state-1 mean is 50
        }
    }
}

TEST_CASE("scoring rejects Null cells and feature mismatches") {
    const HmmSpec spec = single_state_standard_normal();
    const Schema schema({{"f0", ColumnKind::Numeric, {}, false}});
    UserTable t{"u", {{Value::null()}}};
    CHECK_THROWS_WITH(forward_log_likelihood(spec, schema, t),
                      Catch::Matchers::ContainsSubstring("f0"));
    const Schema wrong({{"other", ColumnKind::Numeric, {}, false}});
    CHECK_THROWS(forward_log_likelihood(spec, wrong, table_of_values({0.0})));
}

TEST_CASE("sampling is deterministic and shaped like the acceptance data") {
    RandomEngine rng(7);
    HmmSpec spec = random_hmm_spec(rng, 3, 3);
    const LengthDistribution lengths = LengthDistribution::uniform(2, 6);
    const Collection a = sample_collection(spec, 25, lengths, std::nullopt, 31337);
    const Collection b = sample_collection(spec, 25, lengths, std::nullopt, 31337);
    CHECK(a == b);
    const Collection c = sample_collection(spec, 25, lengths, std::nullopt, 31338);
    CHECK_FALSE(a == c);

    // One-state sanity: 3 tables of 4 iid rows.
    const HmmSpec one = single_state_standard_normal();
    const Collection iid =
        sample_collection(one, 3, LengthDistribution::uniform(4, 4), std::nullopt, 0);
    REQUIRE(iid.size() == 3);
    for (const auto& [id, t] : iid.tables) {
        CHECK(t.length() == 4);
        CHECK(validate_table(iid.schema, t).ok);
    }
}

TEST_CASE("derived categorical column matches the sample-table shape") {
    RandomEngine rng(8);
    HmmSpec spec;
    spec.features = {"g0", "g1", "g2", "g3", "g4"};
    spec.pi = {1.0};
    spec.transition = Eigen::MatrixXd::Ones(1, 1);
    Eigen::VectorXd mu(5);
    mu << 0, 1, 2, 3, 4;
    spec.means = {mu};
    spec.covariances = {Eigen::MatrixXd::Identity(5, 5)};
    spec.validate();
    CategoricalRule rule;
    rule.source_feature = "g0";
    rule.column_name = "g0_band";
    rule.thresholds = {-0.5, 0.0, 0.5};
    rule.labels = {"Low", "Medium", "High", "Very High"};
    const Collection sample =
        sample_collection(spec, 10, LengthDistribution::uniform(3, 3), rule, 5);
    // timestep + 5 features + derived categorical = 7 columns.
    REQUIRE(sample.schema.size() == 7);
    CHECK(sample.schema.column(0).name == "timestep");
    CHECK(sample.schema.column(6).name == "g0_band");
    CHECK(sample.schema.column(6).kind == ColumnKind::Categorical);
    for (const auto& [id, t] : sample.tables) {
        CHECK(validate_table(sample.schema, t).ok);
        for (const Row& row : t.rows) {
            const double g0 = row[1].number();
            const std::string& band = row[6].category();
            if (g0 < -0.5) CHECK(band == "Low");
            else if (g0 < 0.0) CHECK(band == "Medium");
            else if (g0 < 0.5) CHECK(band == "High");
            else CHECK(band == "Very High");
        }
    }
}

TEST_CASE("state occupancy converges to the stationary distribution") {
    HmmSpec spec;
    spec.features = {"f0"};
    spec.pi = {0.5, 0.5};
    spec.transition.resize(2, 2);
    spec.transition << 0.9, 0.1, 0.15, 0.85;
    spec.means = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
    spec.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
    spec.validate();
    // Stationary distribution by power iteration.
    Eigen::RowVector2d station(0.5, 0.5);
    for (int i = 0; i < 10000; ++i) station = station * spec.transition;

    RandomEngine rng(40);
    std::size_t counts[2] = {0, 0};
    std::size_t total = 0;
    for (int table = 0; table < 200; ++table) {
        for (std::size_t s : sample_state_path(spec, 1000, rng)) {
            ++counts[s];
            ++total;
        }
    }
    REQUIRE(total >= 100000);
    for (int s = 0; s < 2; ++s) {
        const double freq = static_cast<double>(counts[s]) / static_cast<double>(total);
        CHECK(std::abs(freq - station(s)) < 0.01);
    }
}

TEST_CASE("likelihood divergence basics") {
    const HmmSpec spec = single_state_standard_normal();
    const Schema schema({{"f0", ColumnKind::Numeric, {}, false}});
    Collection real;
    real.schema = schema;
    for (int i = 0; i < 5; ++i) real.insert(table_of_values({0.0}, "r" + std::to_string(i)));

    CHECK(likelihood_divergence(spec, real, real).w1 == 0.0);

    // Scores shift by exactly c when each value moves from 0 to sqrt(2c).
    const double c = 1.5;
    Collection shifted;
    shifted.schema = schema;
    for (int i = 0; i < 5; ++i) {
        shifted.insert(table_of_values({std::sqrt(2.0 * c)}, "s" + std::to_string(i)));
    }
    CHECK(likelihood_divergence(spec, real, shifted).w1 == Catch::Approx(c).epsilon(1e-12));

    // Tables with Null in a scored column are excluded table-wise.
    Collection with_null = shifted;
    UserTable bad{"bad", {{Value::numeric(0.0)}, {Value::null()}}};
    with_null.insert(std::move(bad));
    const auto result = likelihood_divergence(spec, real, with_null);
    CHECK(result.synth_excluded == 1);
    CHECK(result.synth_scored == 5);

    Collection all_null;
    all_null.schema = schema;
    all_null.insert(UserTable{"n", {{Value::null()}}});
    CHECK_THROWS(likelihood_divergence(spec, real, all_null));
}

TEST_CASE("real-vs-heldout likelihood divergence is small at the 10k scale") {
    // Context check: two independent 10k samples from the published spec
    // should sit within sampling error of each other, a fraction of a nat.
    const HmmSpec spec = HmmSpec::from_json(nlohmann::json::parse(
        read_text_file(std::string(LONGSYNTH_SOURCE_DIR) + "/data/acceptance_hmm.json")));
    const LengthDistribution lengths = LengthDistribution::uniform(4, 12);
    const Collection real = sample_collection(spec, 10000, lengths, std::nullopt, 1001);
    const Collection held = sample_collection(spec, 10000, lengths, std::nullopt, 1002);
    const double w1 = likelihood_divergence(spec, real, held).w1;
    CHECK(w1 < 2.0);
    CHECK(univariate_marginal_divergence(real, held).average < 0.2);
}

TEST_CASE("hmm spec json round trip") {
    RandomEngine rng(12);
    HmmSpec spec = random_hmm_spec(rng, 3, 3);
    CategoricalRule rule;
    rule.source_feature = spec.features[0];
    rule.column_name = "band";
    rule.thresholds = {0.0};
    rule.labels = {"lo", "hi"};
    spec.categorical = rule;
    const HmmSpec back = HmmSpec::from_json(nlohmann::json::parse(spec.to_json().dump()));
    CHECK(back.pi == spec.pi);
    CHECK(back.features == spec.features);
    CHECK(back.transition.isApprox(spec.transition, 0.0));
    for (std::size_t s = 0; s < spec.num_states(); ++s) {
        CHECK(back.means[s].isApprox(spec.means[s], 0.0));
        CHECK(back.covariances[s].isApprox(spec.covariances[s], 0.0));
    }
    REQUIRE(back.categorical.has_value());
    CHECK(back.categorical->column_name == "band");
}

TEST_CASE("invalid specs are rejected") {
    HmmSpec spec = single_state_standard_normal();
    spec.pi = {0.5};  // does not sum to 1
    CHECK_THROWS(spec.validate());
    spec = single_state_standard_normal();
    spec.covariances[0](0, 0) = -1.0;  // not PD
    CHECK_THROWS(spec.validate());
    spec = single_state_standard_normal();
    CHECK_THROWS(sample_collection(spec, 0, LengthDistribution::uniform(1, 2), std::nullopt, 0));
}
