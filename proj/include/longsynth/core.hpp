#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "longsynth/rng.hpp"
#include "longsynth/time.hpp"

namespace longsynth {

enum class ColumnKind { Numeric, Categorical, Timestamp };

inline std::string to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Numeric: return "numeric";
        case ColumnKind::Categorical: return "categorical";
        case ColumnKind::Timestamp: return "timestamp";
    }
    return "numeric";
}

inline ColumnKind column_kind_from_string(std::string_view s) {
    if (s == "numeric") return ColumnKind::Numeric;
    if (s == "categorical") return ColumnKind::Categorical;
    if (s == "timestamp") return ColumnKind::Timestamp;
    throw std::invalid_argument("unknown column kind: " + std::string(s));
}

// Shortest decimal form that parses back to the same double.
inline std::string render_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

// One typed cell. Numeric cells keep the source lexeme when they were
// ingested from text, so re-serialization echoes the input ("83.0" stays
// "83.0"); equality compares the stored value only.
class Value {
public:
    enum class Kind { Null, Numeric, Categorical, Timestamp };

    Value() : kind_(Kind::Null) {}

    static Value null() { return Value(); }

    static Value numeric(double v, std::string lexeme = {}) {
        if (!std::isfinite(v)) throw std::invalid_argument("numeric value must be finite");
        Value out;
        out.kind_ = Kind::Numeric;
        out.number_ = v;
        out.text_ = std::move(lexeme);
        return out;
    }

    static Value categorical(std::string v) {
        Value out;
        out.kind_ = Kind::Categorical;
        out.text_ = std::move(v);
        return out;
    }

    static Value timestamp(std::int64_t seconds) {
        if (!timestamp_in_range(seconds)) throw std::invalid_argument("timestamp out of renderable range");
        Value out;
        out.kind_ = Kind::Timestamp;
        out.seconds_ = seconds;
        return out;
    }

    Kind kind() const { return kind_; }
    bool is_null() const { return kind_ == Kind::Null; }

    double number() const {
        if (kind_ != Kind::Numeric) throw std::logic_error("value is not numeric");
        return number_;
    }

    const std::string& category() const {
        if (kind_ != Kind::Categorical) throw std::logic_error("value is not categorical");
        return text_;
    }

    std::int64_t seconds() const {
        if (kind_ != Kind::Timestamp) throw std::logic_error("value is not a timestamp");
        return seconds_;
    }

    // Text form used by both the CSV writer and the row serializer;
    // Null renders as the empty string.
    std::string to_text() const {
        switch (kind_) {
            case Kind::Null: return "";
            case Kind::Numeric: return text_.empty() ? render_double(number_) : text_;
            case Kind::Categorical: return text_;
            case Kind::Timestamp: return format_timestamp(seconds_);
        }
        return "";
    }

    friend bool operator==(const Value& a, const Value& b) {
        if (a.kind_ != b.kind_) return false;
        switch (a.kind_) {
            case Kind::Null: return true;
            case Kind::Numeric: return a.number_ == b.number_;
            case Kind::Categorical: return a.text_ == b.text_;
            case Kind::Timestamp: return a.seconds_ == b.seconds_;
        }
        return false;
    }
    friend bool operator!=(const Value& a, const Value& b) { return !(a == b); }

private:
    Kind kind_;
    double number_ = 0.0;
    std::int64_t seconds_ = 0;
    std::string text_;
};

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> categories;  // required for categorical columns
    bool static_id = false;               // serializer may infill this column from history
};

class Schema {
public:
    Schema() = default;

    explicit Schema(std::vector<Column> columns) : columns_(std::move(columns)) {
        std::set<std::string> seen;
        for (const Column& c : columns_) {
            if (c.name.empty()) throw std::invalid_argument("schema column with empty name");
            if (!seen.insert(c.name).second) {
                throw std::invalid_argument("duplicate schema column: " + c.name);
            }
            if (c.kind == ColumnKind::Categorical && c.categories.empty()) {
                throw std::invalid_argument("categorical column without categories: " + c.name);
            }
        }
    }

    const std::vector<Column>& columns() const { return columns_; }
    std::size_t size() const { return columns_.size(); }
    const Column& column(std::size_t i) const { return columns_.at(i); }

    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (columns_[i].name == name) return i;
        }
        return std::nullopt;
    }

    std::size_t require_index(std::string_view name) const {
        const auto idx = index_of(name);
        if (!idx) throw std::invalid_argument("schema has no column named " + std::string(name));
        return *idx;
    }

    friend bool operator==(const Schema& a, const Schema& b) {
        if (a.columns_.size() != b.columns_.size()) return false;
        for (std::size_t i = 0; i < a.columns_.size(); ++i) {
            const Column& x = a.columns_[i];
            const Column& y = b.columns_[i];
            if (x.name != y.name || x.kind != y.kind || x.categories != y.categories ||
                x.static_id != y.static_id) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<Column> columns_;
};

using Row = std::vector<Value>;

// One user's ordered trajectory; the privacy unit.
struct UserTable {
    std::string user_id;
    std::vector<Row> rows;

    std::size_t length() const { return rows.size(); }

    friend bool operator==(const UserTable& a, const UserTable& b) {
        return a.user_id == b.user_id && a.rows == b.rows;
    }
};

// A dataset: user tables under a shared schema, ordered by user id.
struct Collection {
    Schema schema;
    std::map<std::string, UserTable> tables;

    std::size_t size() const { return tables.size(); }

    void insert(UserTable table) {
        auto [it, inserted] = tables.emplace(table.user_id, std::move(table));
        if (!inserted) throw std::invalid_argument("duplicate user id: " + it->first);
    }

    friend bool operator==(const Collection& a, const Collection& b) {
        return a.schema == b.schema && a.tables == b.tables;
    }
};

struct CellViolation {
    std::size_t row;
    std::string column;
    std::string reason;
};

struct ValidationReport {
    bool ok = true;
    std::vector<CellViolation> violations;
};

inline bool cell_conforms(const Column& column, const Value& value, std::string* reason) {
    if (value.is_null()) return true;
    switch (column.kind) {
        case ColumnKind::Numeric:
            if (value.kind() != Value::Kind::Numeric) {
                if (reason) *reason = "non-numeric value in numeric column";
                return false;
            }
            return true;
        case ColumnKind::Categorical:
            if (value.kind() != Value::Kind::Categorical) {
                if (reason) *reason = "non-categorical value in categorical column";
                return false;
            }
            if (std::find(column.categories.begin(), column.categories.end(), value.category()) ==
                column.categories.end()) {
                if (reason) *reason = "value not in category set";
                return false;
            }
            return true;
        case ColumnKind::Timestamp:
            if (value.kind() != Value::Kind::Timestamp) {
                if (reason) *reason = "invalid timestamp";
                return false;
            }
            return true;
    }
    return false;
}

inline ValidationReport validate_table(const Schema& schema, const UserTable& table) {
    ValidationReport report;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const Row& row = table.rows[r];
        if (row.size() != schema.size()) {
            report.ok = false;
            report.violations.push_back({r, "<row>", "wrong cell count"});
            continue;
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::string reason;
            if (!cell_conforms(schema.column(c), row[c], &reason)) {
                report.ok = false;
                report.violations.push_back({r, schema.column(c).name, reason});
            }
        }
    }
    return report;
}

inline std::map<std::size_t, std::size_t> length_histogram(const Collection& collection) {
    if (collection.tables.empty()) throw std::invalid_argument("length_histogram: empty collection");
    std::map<std::size_t, std::size_t> hist;
    for (const auto& [id, table] : collection.tables) {
        ++hist[table.length()];
    }
    return hist;
}

// Destroys temporal order per table while preserving every pooled marginal;
// used as an evaluation control.
inline Collection shuffle_rows_within_tables(const Collection& collection, std::uint64_t seed) {
    Collection out;
    out.schema = collection.schema;
    for (const auto& [id, table] : collection.tables) {
        UserTable copy = table;
        RandomEngine rng(derive_seed(seed, hash_string(id)));
        rng.shuffle(copy.rows);
        out.tables.emplace(id, std::move(copy));
    }
    return out;
}

}  // namespace longsynth
