#include <catch2/catch_amalgamated.hpp>

#include "longsynth/flatten.hpp"

#include "test_support.hpp"

using namespace longsynth;

namespace {

Collection one_column_collection(const std::vector<std::vector<double>>& tables) {
    Collection c;
    c.schema = Schema({{"a", ColumnKind::Numeric, {}, false}});
    for (std::size_t u = 0; u < tables.size(); ++u) {
        UserTable t;
        t.user_id = "u" + std::to_string(u);
        for (double v : tables[u]) t.rows.push_back({Value::numeric(v)});
        c.insert(std::move(t));
    }
    return c;
}

}  // namespace

TEST_CASE("flatten pads with Null after the last timestep") {
    const Collection c = one_column_collection({{1.0, 2.0}});
    const FlatTable flat = flatten(c, 3);
    REQUIRE(flat.flat_schema.size() == 3);
    CHECK(flat.flat_schema.column(0).name == "a__t1");
    CHECK(flat.flat_schema.column(1).name == "a__t2");
    CHECK(flat.flat_schema.column(2).name == "a__t3");
    REQUIRE(flat.rows.size() == 1);
    CHECK(flat.rows[0][0] == Value::numeric(1.0));
    CHECK(flat.rows[0][1] == Value::numeric(2.0));
    CHECK(flat.rows[0][2].is_null());
}

TEST_CASE("flatten column order is time-major") {
    Schema schema({{"x", ColumnKind::Numeric, {}, false}, {"y", ColumnKind::Numeric, {}, false}});
    Collection c;
    c.schema = schema;
    UserTable t{"u", {{Value::numeric(1), Value::numeric(2)}, {Value::numeric(3), Value::numeric(4)}}};
    c.insert(std::move(t));
    const FlatTable flat = flatten(c, 2);
    CHECK(flat.flat_schema.column(0).name == "x__t1");
    CHECK(flat.flat_schema.column(1).name == "y__t1");
    CHECK(flat.flat_schema.column(2).name == "x__t2");
    CHECK(flat.flat_schema.column(3).name == "y__t2");
    CHECK(flat.rows[0][2] == Value::numeric(3));
}

TEST_CASE("flatten at exactly L has no padding; 9 columns x 10 steps gives 90") {
    std::vector<Column> cols;
    for (int i = 0; i < 9; ++i) cols.push_back({"c" + std::to_string(i), ColumnKind::Numeric, {}, false});
    Schema schema(std::move(cols));
    Collection c;
    c.schema = schema;
    UserTable t;
    t.user_id = "u";
    for (int r = 0; r < 10; ++r) {
        Row row;
        for (int i = 0; i < 9; ++i) row.push_back(Value::numeric(r + i));
        t.rows.push_back(row);
    }
    c.insert(std::move(t));
    const FlatTable flat = flatten(c, 10);
    CHECK(flat.flat_schema.size() == 90);
    for (const Value& v : flat.rows[0]) CHECK_FALSE(v.is_null());
}

TEST_CASE("flatten refuses silent truncation") {
    const Collection c = one_column_collection({{1, 2, 3, 4}});
    CHECK_THROWS_AS(flatten(c, 3), std::invalid_argument);
    CHECK_NOTHROW(flatten(filter_truncate(c, 3), 3));
}

TEST_CASE("unflatten strips trailing padding only") {
    const Collection c = one_column_collection({{1.0, 2.0}});
    const FlatTable flat = flatten(c, 5);
    const UnflattenResult back = unflatten(flat);
    CHECK(back.dropped_users.empty());
    CHECK(back.collection.tables.at("u0").length() == 2);

    // Interior all-Null timestep survives.
    Collection interior;
    interior.schema = c.schema;
    interior.insert(UserTable{"w", {{Value::numeric(1)}, {Value::null()}, {Value::numeric(2)}}});
    const UnflattenResult round = unflatten(flatten(interior, 4));
    REQUIRE(round.collection.tables.at("w").length() == 3);
    CHECK(round.collection.tables.at("w").rows[1][0].is_null());
}

TEST_CASE("all-null flat rows drop the user with a warning") {
    Schema schema({{"a", ColumnKind::Numeric, {}, false}});
    FlatTable flat;
    flat.base_schema = schema;
    flat.flat_schema = make_flat_schema(schema, 2);
    flat.length = 2;
    flat.user_ids = {"ghost"};
    flat.rows = {{Value::null(), Value::null()}};
    const UnflattenResult result = unflatten(flat);
    CHECK(result.collection.tables.empty());
    REQUIRE(result.dropped_users.size() == 1);
    CHECK(result.dropped_users[0] == "ghost");
}

TEST_CASE("flatten then unflatten is the identity on its domain") {
    RandomEngine rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const Collection c = longsynth::testing::random_collection(rng, 5, 6);
        std::size_t max_len = 0;
        for (const auto& [id, t] : c.tables) max_len = std::max(max_len, t.length());
        const std::size_t L = max_len + rng.uniform_below(3);
        const UnflattenResult back = unflatten(flatten(c, L));
        REQUIRE(back.dropped_users.empty());
        REQUIRE(back.collection.tables == c.tables);
    }
}

TEST_CASE("filter_truncate keeps first L rows of long-enough users") {
    const Collection c = one_column_collection({{1, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10},
                                                {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}});
    const Collection kept = filter_truncate(c, 10);
    REQUIRE(kept.size() == 2);
    for (const auto& [id, t] : kept.tables) CHECK(t.length() == 10);
    CHECK(kept.tables.at("u1").rows[0][0] == Value::numeric(1));

    const Collection all = filter_truncate(c, 1);
    REQUIRE(all.size() == 3);
    for (const auto& [id, t] : all.tables) CHECK(t.length() == 1);

    CHECK(filter_truncate(c, 100).tables.empty());
}

TEST_CASE("maxent chain factorization reproduces the spurious-mass construction") {
    TrajectoryDistribution source;
    source[{"alpha", "gamma", "alpha"}] = 0.5;
    source[{"beta", "gamma", "beta"}] = 0.5;
    const TrajectoryDistribution out = maxent_two_local(source);
    REQUIRE(out.size() == 4);
    CHECK(out.at({"alpha", "gamma", "beta"}) == 0.25);
    CHECK(out.at({"beta", "gamma", "alpha"}) == 0.25);
    double spurious = 0.0;
    for (const auto& [traj, p] : out) {
        if (!source.count(traj)) spurious += p;
    }
    CHECK(spurious == 0.5);
}

TEST_CASE("maxent is a fixed point on first-order Markov inputs") {
    // Build a chain-factorized distribution explicitly.
    const std::vector<std::string> alphabet{"a", "b"};
    const double p1[2] = {0.3, 0.7};
    const double t12[2][2] = {{0.2, 0.8}, {0.6, 0.4}};
    const double t23[2][2] = {{0.5, 0.5}, {0.9, 0.1}};
    TrajectoryDistribution chain;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < 2; ++k) {
                chain[{alphabet[i], alphabet[j], alphabet[k]}] = p1[i] * t12[i][j] * t23[j][k];
            }
        }
    }
    const TrajectoryDistribution out = maxent_two_local(chain);
    REQUIRE(out.size() == chain.size());
    for (const auto& [traj, p] : chain) {
        CHECK(out.at(traj) == Catch::Approx(p).margin(1e-12));
    }
}

TEST_CASE("maxent output is normalized and matches adjacent-pair marginals") {
    RandomEngine rng(404);
    const std::vector<std::string> alphabet{"a", "b", "c"};
    for (int trial = 0; trial < 50; ++trial) {
        TrajectoryDistribution input;
        double total = 0.0;
        for (const auto& x : alphabet) {
            for (const auto& y : alphabet) {
                for (const auto& z : alphabet) {
                    if (rng.uniform01() < 0.4) {
                        const double p = rng.uniform01();
                        input[{x, y, z}] = p;
                        total += p;
                    }
                }
            }
        }
        if (input.empty()) continue;
        for (auto& [traj, p] : input) p /= total;
        // Re-normalize exactly.
        double check = 0.0;
        for (const auto& [traj, p] : input) check += p;
        for (auto& [traj, p] : input) p /= check;

        const TrajectoryDistribution out = maxent_two_local(input);
        double out_total = 0.0;
        std::map<std::pair<std::string, std::string>, double> in12, in23, out12, out23;
        for (const auto& [traj, p] : input) {
            in12[{traj[0], traj[1]}] += p;
            in23[{traj[1], traj[2]}] += p;
        }
        for (const auto& [traj, p] : out) {
            out_total += p;
            out12[{traj[0], traj[1]}] += p;
            out23[{traj[1], traj[2]}] += p;
        }
        CHECK(std::abs(out_total - 1.0) < 1e-12);
        for (const auto& [key, p] : in12) CHECK(std::abs(out12[key] - p) < 1e-12);
        for (const auto& [key, p] : in23) CHECK(std::abs(out23[key] - p) < 1e-12);
    }
}

TEST_CASE("maxent rejects bad input") {
    TrajectoryDistribution unnormalized;
    unnormalized[{"a", "b", "c"}] = 0.5;
    CHECK_THROWS_AS(maxent_two_local(unnormalized), std::invalid_argument);
    TrajectoryDistribution wrong_length;
    wrong_length[{"a", "b"}] = 1.0;
    CHECK_THROWS_AS(maxent_two_local(wrong_length), std::invalid_argument);
}

TEST_CASE("flat csv export uses the derived header names") {
    const Collection c = one_column_collection({{1.0}});
    const FlatTable flat = flatten(c, 2);
    const std::string csv = flat_to_csv(flat);
    CHECK(csv.find("user_id,row_idx,a__t1,a__t2") == 0);
    CHECK(csv.find("u0,0,1,") != std::string::npos);
}
