#include <catch2/catch_amalgamated.hpp>

#include "longsynth/core.hpp"
#include "longsynth/csv.hpp"
#include "longsynth/time.hpp"

#include "test_support.hpp"

using namespace longsynth;

TEST_CASE("timestamps render and parse losslessly") {
    const auto ts = parse_timestamp("2180-07-22 16:36:00");
    REQUIRE(ts.has_value());
    CHECK(format_timestamp(*ts) == "2180-07-22 16:36:00");

    CHECK(parse_timestamp("2024-02-29 00:00:00").has_value());   // leap year
    CHECK_FALSE(parse_timestamp("2023-02-29 00:00:00").has_value());
    CHECK_FALSE(parse_timestamp("2100-02-29 00:00:00").has_value());  // century, not leap
    CHECK(parse_timestamp("2000-02-29 00:00:00").has_value());
    CHECK_FALSE(parse_timestamp("2020-13-01 00:00:00").has_value());
    CHECK_FALSE(parse_timestamp("2020-00-01 00:00:00").has_value());
    CHECK_FALSE(parse_timestamp("2020-01-01 24:00:00").has_value());
    CHECK_FALSE(parse_timestamp("2020-1-01 00:00:00").has_value());
    CHECK_FALSE(parse_timestamp("2020-01-01T00:00:00").has_value());

    RandomEngine rng(11);
    for (int i = 0; i < 500; ++i) {
        const auto t = static_cast<std::int64_t>(rng.uniform_below(9000000000ULL)) - 2000000000;
        const auto back = parse_timestamp(format_timestamp(t));
        REQUIRE(back.has_value());
        CHECK(*back == t);
    }
    CHECK(hour_of_day(-1) == 23);
    CHECK(hour_of_day(3600) == 1);
}

TEST_CASE("numeric values reject non-finite and keep lexemes") {
    CHECK_THROWS_AS(Value::numeric(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
    CHECK_THROWS_AS(Value::numeric(std::numeric_limits<double>::infinity()), std::invalid_argument);
    const Value v = Value::numeric(83.0, "83.0");
    CHECK(v.to_text() == "83.0");
    CHECK(Value::numeric(83.0).to_text() == "83");
    CHECK(v == Value::numeric(83.0));  // equality ignores the lexeme
    CHECK_FALSE(parse_double("nan").has_value());
    CHECK_FALSE(parse_double("inf").has_value());
    CHECK_FALSE(parse_double("1x").has_value());
}

TEST_CASE("validate_table reports violations by row and column") {
    Schema schema({{"a", ColumnKind::Numeric, {}, false},
                   {"b", ColumnKind::Categorical, {"x", "y"}, false}});
    UserTable ok{"u", {{Value::numeric(1), Value::categorical("x")},
                       {Value::numeric(2), Value::categorical("y")},
                       {Value::numeric(3), Value::null()}}};
    CHECK(validate_table(schema, ok).ok);

    UserTable bad = ok;
    bad.rows[2][0] = Value::categorical("text");
    const auto report = validate_table(schema, bad);
    REQUIRE_FALSE(report.ok);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].row == 2);
    CHECK(report.violations[0].column == "a");
    CHECK(report.violations[0].reason.find("non-numeric") != std::string::npos);

    UserTable nulls{"n", {{Value::null(), Value::null()}, {Value::null(), Value::null()}}};
    CHECK(validate_table(schema, nulls).ok);

    UserTable off_category{"c", {{Value::numeric(1), Value::categorical("z")}}};
    const auto cat_report = validate_table(schema, off_category);
    REQUIRE_FALSE(cat_report.ok);
    CHECK(cat_report.violations[0].reason.find("category") != std::string::npos);
}

TEST_CASE("schema invariants") {
    CHECK_THROWS_AS(Schema({{"", ColumnKind::Numeric, {}, false}}), std::invalid_argument);
    CHECK_THROWS_AS(Schema({{"a", ColumnKind::Numeric, {}, false}, {"a", ColumnKind::Numeric, {}, false}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Schema({{"c", ColumnKind::Categorical, {}, false}}), std::invalid_argument);
}

TEST_CASE("length_histogram") {
    Schema schema({{"a", ColumnKind::Numeric, {}, false}});
    Collection c;
    c.schema = schema;
    auto add = [&](const std::string& id, std::size_t rows) {
        UserTable t;
        t.user_id = id;
        for (std::size_t r = 0; r < rows; ++r) t.rows.push_back({Value::numeric(1)});
        c.insert(std::move(t));
    };
    add("u1", 2);
    add("u2", 2);
    add("u3", 3);
    const auto hist = length_histogram(c);
    CHECK(hist == std::map<std::size_t, std::size_t>{{2, 2}, {3, 1}});

    Collection single;
    single.schema = schema;
    UserTable t5;
    t5.user_id = "only";
    for (int r = 0; r < 5; ++r) t5.rows.push_back({Value::numeric(1)});
    single.insert(std::move(t5));
    CHECK(length_histogram(single) == std::map<std::size_t, std::size_t>{{5, 1}});

    Collection empty;
    empty.schema = schema;
    CHECK_THROWS_AS(length_histogram(empty), std::invalid_argument);
}

TEST_CASE("filtered cohort histogram support stays in range") {
    Schema schema({{"a", ColumnKind::Numeric, {}, false}});
    Collection all;
    all.schema = schema;
    RandomEngine rng(3);
    for (int u = 0; u < 200; ++u) {
        UserTable t;
        t.user_id = "u" + std::to_string(u);
        const std::size_t len = 1 + rng.uniform_below(60);
        for (std::size_t r = 0; r < len; ++r) t.rows.push_back({Value::numeric(0)});
        all.insert(std::move(t));
    }
    Collection cohort;
    cohort.schema = schema;
    for (const auto& [id, t] : all.tables) {
        if (t.length() >= 4 && t.length() <= 50) cohort.tables.emplace(id, t);
    }
    for (const auto& [len, count] : length_histogram(cohort)) {
        CHECK(len >= 4);
        CHECK(len <= 50);
    }
}

TEST_CASE("csv round trip is the identity on collections") {
    RandomEngine rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const Collection c = longsynth::testing::random_collection(rng);
        const Collection back = collection_from_csv(collection_to_csv(c), c.schema);
        REQUIRE(back == c);
    }
}

TEST_CASE("csv handles quoting edge cases") {
    Schema schema({{"name", ColumnKind::Categorical,
                    {"a,b", "with \"quotes\"", "line\nbreak", "plain"}, false}});
    Collection c;
    c.schema = schema;
    UserTable t;
    t.user_id = "weird,id";
    t.rows.push_back({Value::categorical("a,b")});
    t.rows.push_back({Value::categorical("with \"quotes\"")});
    t.rows.push_back({Value::categorical("line\nbreak")});
    t.rows.push_back({Value::null()});
    c.insert(std::move(t));
    const Collection back = collection_from_csv(collection_to_csv(c), schema);
    CHECK(back == c);
}

TEST_CASE("csv reader rejects malformed input") {
    Schema schema({{"a", ColumnKind::Numeric, {}, false}});
    CHECK_THROWS(collection_from_csv("wrong,header\n", schema));
    CHECK_THROWS(collection_from_csv("user_id,row_idx,a\nu,0,abc\n", schema));
    CHECK_THROWS(collection_from_csv("user_id,row_idx,a\nu,0,1\nu,0,2\n", schema));  // dup row_idx
}

TEST_CASE("shuffle_rows_within_tables preserves marginals and ids") {
    RandomEngine rng(9);
    const Collection c = longsynth::testing::random_collection(rng, 5, 8);
    const Collection shuffled = shuffle_rows_within_tables(c, 123);
    REQUIRE(shuffled.size() == c.size());
    for (const auto& [id, t] : c.tables) {
        const auto& s = shuffled.tables.at(id);
        REQUIRE(s.length() == t.length());
        // Same multiset of rows.
        auto sorted_rows = [](const UserTable& table) {
            std::vector<std::string> keys;
            for (const Row& row : table.rows) {
                std::string k;
                for (const Value& v : row) k += v.to_text() + "\x1f";
                keys.push_back(k);
            }
            std::sort(keys.begin(), keys.end());
            return keys;
        };
        CHECK(sorted_rows(t) == sorted_rows(s));
    }
    CHECK(shuffle_rows_within_tables(c, 123) == shuffled);  // deterministic
}
