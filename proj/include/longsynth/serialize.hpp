#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "longsynth/core.hpp"
#include "longsynth/rng.hpp"

namespace longsynth {

// Text serialization of a user table:
//
//   Columns: charttime, heartrate, ...
//   [Row 1]: charttime is 2180-07-22 16:36:00, heartrate is 83.0, ...
//   [Row 2]: ...
//
// Row indices are 1-based and consecutive; a Null cell renders as an empty
// value after "is". The format has no escaping: the parser recovers values
// containing commas by splitting on ", <column> is " anchors from the
// schema's column list.

struct SerializedTable {
    std::string text;
};

inline std::string serialize_header(const Schema& schema) {
    std::string out = "Columns:";
    for (std::size_t c = 0; c < schema.size(); ++c) {
        out += c == 0 ? " " : ", ";
        out += schema.column(c).name;
    }
    return out;
}

inline std::string serialize_row(const Schema& schema, const Row& row, std::size_t index1) {
    if (row.size() != schema.size()) throw std::invalid_argument("serialize_row: row width mismatch");
    std::string out = "[Row " + std::to_string(index1) + "]:";
    for (std::size_t c = 0; c < schema.size(); ++c) {
        out += c == 0 ? " " : ", ";
        out += schema.column(c).name;
        out += " is ";
        out += row[c].to_text();
    }
    return out;
}

// Rows [from, to) rendered with 1-based indices starting at from + 1; each
// line is newline-terminated so context and target concatenate exactly.
inline std::string serialize_rows(const Schema& schema, const UserTable& table, std::size_t from,
                                  std::size_t to) {
    std::string out;
    for (std::size_t r = from; r < to; ++r) {
        out += serialize_row(schema, table.rows[r], r + 1);
        out += '\n';
    }
    return out;
}

inline SerializedTable serialize(const Schema& schema, const UserTable& table) {
    SerializedTable out;
    out.text = serialize_header(schema) + '\n' + serialize_rows(schema, table, 0, table.rows.size());
    return out;
}

enum class RowOutcome { KeyValue, CsvFallback, Infilled, Failed };

inline std::string to_string(RowOutcome o) {
    switch (o) {
        case RowOutcome::KeyValue: return "keyvalue";
        case RowOutcome::CsvFallback: return "csv_fallback";
        case RowOutcome::Infilled: return "infilled";
        case RowOutcome::Failed: return "failed";
    }
    return "failed";
}

struct ParseReport {
    std::vector<RowOutcome> outcomes;
    bool early_terminated = false;
    std::size_t terminated_row = 0;  // 1-based index of the failed row

    bool complete() const { return !early_terminated; }
};

struct ParseResult {
    UserTable table;
    ParseReport report;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Trailing spaces stay: a Null in the last column renders as "<col> is "
// and the anchor needs that space to match.
inline std::string_view trim_line(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

// Strips a leading "[Row k]:" marker when present.
inline std::string_view strip_row_marker(std::string_view line) {
    std::string_view s = trim_line(line);
    if (s.size() < 7 || s.substr(0, 5) != "[Row ") return s;
    std::size_t i = 5;
    std::size_t digits = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
        ++digits;
    }
    if (digits == 0 || i + 1 >= s.size() || s[i] != ']' || s[i + 1] != ':') return s;
    std::string_view rest = s.substr(i + 2);
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    return rest;
}

// Locations of "<col> is " anchors, scanned left to right in schema order.
// An anchor matches at the content start or immediately after ", ".
struct AnchorScan {
    std::vector<std::optional<std::string>> values;  // raw value text per column
    std::size_t found = 0;
};

inline AnchorScan scan_key_value(std::string_view content, const Schema& schema) {
    AnchorScan scan;
    scan.values.resize(schema.size());
    struct Hit {
        std::size_t column;
        std::size_t anchor_pos;
        std::size_t value_start;
    };
    std::vector<Hit> hits;
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const std::string anchor = schema.column(c).name + " is ";
        std::size_t pos = std::string_view::npos;
        std::size_t search = cursor;
        while (search <= content.size()) {
            const std::size_t found = content.find(anchor, search);
            if (found == std::string_view::npos) break;
            const bool at_start = found == 0;
            const bool after_sep = found >= 2 && content[found - 1] == ' ' && content[found - 2] == ',';
            if (at_start || after_sep) {
                pos = found;
                break;
            }
            search = found + 1;
        }
        if (pos == std::string_view::npos) continue;
        hits.push_back({c, pos, pos + anchor.size()});
        cursor = pos + anchor.size();
        ++scan.found;
    }
    for (std::size_t k = 0; k < hits.size(); ++k) {
        std::size_t value_end = content.size();
        if (k + 1 < hits.size()) value_end = hits[k + 1].anchor_pos - 2;  // drop the ", " separator
        scan.values[hits[k].column] =
            std::string(trim(content.substr(hits[k].value_start, value_end - hits[k].value_start)));
    }
    return scan;
}

inline std::optional<Value> convert_cell(const Column& column, std::string_view text) {
    if (text.empty()) return Value::null();
    switch (column.kind) {
        case ColumnKind::Numeric: {
            const auto v = parse_double(text);
            if (!v) return std::nullopt;
            return Value::numeric(*v, std::string(text));
        }
        case ColumnKind::Categorical: {
            const std::string s(text);
            if (std::find(column.categories.begin(), column.categories.end(), s) ==
                column.categories.end()) {
                return std::nullopt;
            }
            return Value::categorical(s);
        }
        case ColumnKind::Timestamp: {
            const auto ts = parse_timestamp(text);
            if (!ts) return std::nullopt;
            return Value::timestamp(*ts);
        }
    }
    return std::nullopt;
}

// Most recent non-null value of a column, searching the accepted rows of the
// current parse first and then the caller-provided history.
inline std::optional<Value> history_value(std::size_t column, const std::vector<Row>& accepted,
                                          const UserTable* history) {
    for (auto it = accepted.rbegin(); it != accepted.rend(); ++it) {
        if (column < it->size() && !(*it)[column].is_null()) return (*it)[column];
    }
    if (history) {
        for (auto it = history->rows.rbegin(); it != history->rows.rend(); ++it) {
            if (column < it->size() && !(*it)[column].is_null()) return (*it)[column];
        }
    }
    return std::nullopt;
}

}  // namespace detail

// Parses one serialized row through the fallback cascade:
//   1. key-value pairs in schema order;
//   2. comma-separated values matching the schema order;
//   3. key-value with missing static-identifier columns infilled from the
//      accepted rows / history.
// Returns the row and its outcome, or Failed when no stage yields a row that
// validates against the schema.
inline std::pair<std::optional<Row>, RowOutcome> parse_row(std::string_view line, const Schema& schema,
                                                           const std::vector<Row>& accepted,
                                                           const UserTable* history) {
    const std::string_view content = detail::strip_row_marker(line);
    const detail::AnchorScan scan = detail::scan_key_value(content, schema);

    auto convert_scan = [&](bool allow_infill) -> std::optional<std::pair<Row, bool>> {
        Row row(schema.size(), Value::null());
        bool infilled = false;
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (scan.values[c]) {
                const auto v = detail::convert_cell(schema.column(c), *scan.values[c]);
                if (!v) return std::nullopt;  // fails validation
                row[c] = *v;
                continue;
            }
            if (!allow_infill) return std::nullopt;
            if (!schema.column(c).static_id) return std::nullopt;
            const auto v = detail::history_value(c, accepted, history);
            if (!v) return std::nullopt;
            row[c] = *v;
            infilled = true;
        }
        return std::make_pair(std::move(row), infilled);
    };

    if (scan.found == schema.size()) {
        if (auto converted = convert_scan(false)) {
            return {std::move(converted->first), RowOutcome::KeyValue};
        }
        return {std::nullopt, RowOutcome::Failed};
    }

    // CSV fallback: plain comma split in schema order.
    {
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= content.size(); ++i) {
            if (i == content.size() || content[i] == ',') {
                fields.push_back(detail::trim(content.substr(start, i - start)));
                start = i + 1;
            }
        }
        if (fields.size() == schema.size()) {
            Row row(schema.size(), Value::null());
            bool ok = true;
            for (std::size_t c = 0; c < schema.size(); ++c) {
                const auto v = detail::convert_cell(schema.column(c), fields[c]);
                if (!v) {
                    ok = false;
                    break;
                }
                row[c] = *v;
            }
            if (ok) return {std::move(row), RowOutcome::CsvFallback};
        }
    }

    // Partial infilling of designated static identifier columns.
    if (scan.found > 0) {
        if (auto converted = convert_scan(true)) {
            return {std::move(converted->first),
                    converted->second ? RowOutcome::Infilled : RowOutcome::KeyValue};
        }
    }
    return {std::nullopt, RowOutcome::Failed};
}

// Parses serialized text back into a table. A row that fails every cascade
// stage terminates parsing early; rows accepted so far are returned and all
// failure detail lives in the report.
inline ParseResult parse(const std::string& text, const Schema& schema,
                         const UserTable* history = nullptr, std::string user_id = "parsed") {
    ParseResult result;
    result.table.user_id = std::move(user_id);
    std::istringstream in(text);
    std::string line;
    std::size_t row_counter = 0;
    while (std::getline(in, line)) {
        const std::string_view trimmed = detail::trim_line(line);
        if (trimmed.empty()) continue;
        if (trimmed.substr(0, 8) == "Columns:") continue;
        ++row_counter;
        auto [row, outcome] = parse_row(trimmed, schema, result.table.rows, history);
        result.report.outcomes.push_back(outcome);
        if (!row) {
            result.report.early_terminated = true;
            result.report.terminated_row = row_counter;
            break;
        }
        result.table.rows.push_back(std::move(*row));
    }
    return result;
}

// A dynamic-window training example: the model sees the schema header plus
// the first k rows and must continue with the rest. Context and target
// concatenate back to the full serialization of the source table.
struct TrainingExample {
    std::string user_id;
    std::string context;
    std::string target;
    std::size_t split_k = 0;
    bool pool_fallback = false;
};

// Multiset of historical split indices observed in a training corpus: each
// table of length T contributes the indices 1..T-1 (k = 0 is handled by the
// p_start branch).
class IndexPool {
public:
    IndexPool() = default;

    static IndexPool from_length_histogram(const std::map<std::size_t, std::size_t>& hist) {
        IndexPool pool;
        for (const auto& [length, count] : hist) {
            for (std::size_t k = 1; k < length; ++k) {
                for (std::size_t c = 0; c < count; ++c) pool.entries_.push_back(k);
            }
        }
        return pool;
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<std::size_t>& entries() const { return entries_; }

    bool has_entry_at_most(std::size_t limit) const {
        for (std::size_t k : entries_) {
            if (k <= limit) return true;
        }
        return false;
    }

    std::size_t draw(RandomEngine& rng) const {
        return entries_[rng.uniform_below(entries_.size())];
    }

private:
    std::vector<std::size_t> entries_;
};

// Exactly one example per user per call (the sensitivity-1 contract): k = 0
// with probability p_start, otherwise k is rejection-sampled from the pool
// restricted to k <= T-1. When the pool has no valid entry the split falls
// back to uniform over [0, T-1] and the example is flagged.
inline TrainingExample make_training_example(const Schema& schema, const UserTable& table,
                                             const IndexPool& pool, double p_start,
                                             RandomEngine& rng) {
    if (table.rows.empty()) throw std::invalid_argument("make_training_example: empty table");
    if (p_start < 0.0 || p_start > 1.0) throw std::invalid_argument("make_training_example: bad p_start");
    const std::size_t length = table.length();
    TrainingExample out;
    out.user_id = table.user_id;

    std::size_t k = 0;
    if (length == 1) {
        k = 0;
    } else if (rng.uniform01() < p_start) {
        k = 0;
    } else if (pool.has_entry_at_most(length - 1)) {
        do {
            k = pool.draw(rng);
        } while (k > length - 1);
    } else {
        k = rng.uniform_below(length);
        out.pool_fallback = true;
    }

    out.split_k = k;
    out.context = serialize_header(schema) + '\n' + serialize_rows(schema, table, 0, k);
    out.target = serialize_rows(schema, table, k, length);
    return out;
}

// One training example per user, exported as JSON lines
// {"context": ..., "target": ..., "k": ..., "user_id": ...}. The split-index
// pool is built from the collection's own length histogram; per-user
// randomness is derived from (seed, user id) so the export is order- and
// thread-independent.
inline std::string training_examples_jsonl(const Collection& collection, double p_start,
                                           std::uint64_t seed) {
    if (collection.tables.empty()) {
        throw std::invalid_argument("training_examples_jsonl: empty collection");
    }
    const IndexPool pool = IndexPool::from_length_histogram(length_histogram(collection));
    std::string out;
    for (const auto& [id, table] : collection.tables) {
        RandomEngine rng(derive_seed(seed, hash_string(id)));
        const TrainingExample ex =
            make_training_example(collection.schema, table, pool, p_start, rng);
        nlohmann::ordered_json line;
        line["context"] = ex.context;
        line["target"] = ex.target;
        line["k"] = ex.split_k;
        line["user_id"] = ex.user_id;
        if (ex.pool_fallback) line["pool_fallback"] = true;
        out += line.dump();
        out += '\n';
    }
    return out;
}

}  // namespace longsynth
