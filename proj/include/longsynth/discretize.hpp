#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "longsynth/core.hpp"
#include "longsynth/flatten.hpp"

namespace longsynth {

enum class BinningMethod { EqualWidth, Quantile };

inline std::string to_string(BinningMethod m) {
    return m == BinningMethod::EqualWidth ? "equal_width" : "quantile";
}

inline BinningMethod binning_method_from_string(std::string_view s) {
    if (s == "equal_width") return BinningMethod::EqualWidth;
    if (s == "quantile") return BinningMethod::Quantile;
    throw std::invalid_argument("unknown binning method: " + std::string(s));
}

// Code book for one column. Numeric and timestamp columns use strictly
// increasing bin edges; categorical columns use their schema category list.
// Code B (the last code) is always the dedicated Null code.
class ColumnCoder {
public:
    static ColumnCoder numeric(std::vector<double> edges, bool is_timestamp) {
        for (std::size_t i = 1; i < edges.size(); ++i) {
            if (!(edges[i] > edges[i - 1])) {
                throw std::invalid_argument("discretizer: edges must be strictly increasing");
            }
        }
        if (edges.size() < 2) throw std::invalid_argument("discretizer: need at least one bin");
        ColumnCoder c;
        c.edges_ = std::move(edges);
        c.is_timestamp_ = is_timestamp;
        return c;
    }

    static ColumnCoder categorical(std::vector<std::string> categories) {
        if (categories.empty()) throw std::invalid_argument("discretizer: empty category set");
        ColumnCoder c;
        c.categories_ = std::move(categories);
        return c;
    }

    bool is_categorical() const { return !categories_.empty(); }
    std::size_t bins() const { return is_categorical() ? categories_.size() : edges_.size() - 1; }
    std::size_t code_count() const { return bins() + 1; }
    std::size_t null_code() const { return bins(); }
    const std::vector<double>& edges() const { return edges_; }
    const std::vector<std::string>& categories() const { return categories_; }

    std::size_t encode(const Value& v) const {
        if (v.is_null()) return null_code();
        if (is_categorical()) {
            const auto it = std::find(categories_.begin(), categories_.end(), v.category());
            if (it == categories_.end()) {
                throw std::invalid_argument("discretizer: unknown category '" + v.category() + "'");
            }
            return static_cast<std::size_t>(it - categories_.begin());
        }
        const double x = is_timestamp_ ? static_cast<double>(v.seconds()) : v.number();
        if (x <= edges_.front()) return 0;
        if (x >= edges_.back()) return bins() - 1;
        const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
        return static_cast<std::size_t>(it - edges_.begin()) - 1;
    }

    // Bin midpoints for numeric codes, category names for categorical codes.
    Value decode(std::size_t code) const {
        if (code == null_code()) return Value::null();
        if (code >= code_count()) throw std::invalid_argument("discretizer: code out of range");
        if (is_categorical()) return Value::categorical(categories_[code]);
        const double mid = 0.5 * (edges_[code] + edges_[code + 1]);
        if (is_timestamp_) return Value::timestamp(static_cast<std::int64_t>(std::llround(mid)));
        return Value::numeric(mid);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        if (is_categorical()) {
            j["categories"] = categories_;
        } else {
            j["edges"] = edges_;
            j["timestamp"] = is_timestamp_;
        }
        return j;
    }

    static ColumnCoder from_json(const nlohmann::json& j) {
        if (j.contains("categories")) {
            return categorical(j.at("categories").get<std::vector<std::string>>());
        }
        return numeric(j.at("edges").get<std::vector<double>>(),
                       j.value("timestamp", false));
    }

private:
    std::vector<double> edges_;
    std::vector<std::string> categories_;
    bool is_timestamp_ = false;
};

namespace detail {

inline std::vector<double> equal_width_edges(const std::vector<double>& values, std::size_t bins) {
    double lo = 0.0;
    double hi = 1.0;
    if (!values.empty()) {
        lo = *std::min_element(values.begin(), values.end());
        hi = *std::max_element(values.begin(), values.end());
    }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    }
    // Guard against repeated edges from limited precision on tiny ranges.
    for (std::size_t i = 1; i <= bins; ++i) {
        if (!(edges[i] > edges[i - 1])) edges[i] = std::nextafter(edges[i - 1], hi + 1.0);
    }
    return edges;
}

inline std::vector<double> quantile_edges(std::vector<double> values, std::size_t bins) {
    if (values.empty()) return equal_width_edges(values, bins);
    std::sort(values.begin(), values.end());
    std::vector<double> edges;
    edges.push_back(values.front());
    for (std::size_t b = 1; b < bins; ++b) {
        const double q = static_cast<double>(b) / static_cast<double>(bins);
        const double pos = q * static_cast<double>(values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        const double v = lo + 1 < values.size() ? values[lo] * (1.0 - frac) + values[lo + 1] * frac
                                                : values[lo];
        if (v > edges.back()) edges.push_back(v);
    }
    if (values.back() > edges.back()) edges.push_back(values.back());
    if (edges.size() < 2) return equal_width_edges(values, 1);
    return edges;
}

inline void numeric_stream(const Column& column, const Value& v, std::vector<double>& out) {
    if (column.kind == ColumnKind::Categorical || v.is_null()) return;
    out.push_back(column.kind == ColumnKind::Timestamp ? static_cast<double>(v.seconds())
                                                       : v.number());
}

}  // namespace detail

// Per-column code books fit over a declared fitting set; the schema the
// discretizer was fit on travels with it.
class Discretizer {
public:
    Discretizer() = default;

    static Discretizer fit(const Schema& schema, const std::vector<std::vector<double>>& numeric_values,
                           std::size_t bins, BinningMethod method) {
        if (bins < 1) throw std::invalid_argument("discretizer: bins must be >= 1");
        Discretizer d;
        d.schema_ = schema;
        d.bins_ = bins;
        d.method_ = method;
        for (std::size_t c = 0; c < schema.size(); ++c) {
            const Column& col = schema.column(c);
            if (col.kind == ColumnKind::Categorical) {
                d.coders_.push_back(ColumnCoder::categorical(col.categories));
            } else {
                const auto& vals = numeric_values.at(c);
                const auto edges = method == BinningMethod::EqualWidth
                                       ? detail::equal_width_edges(vals, bins)
                                       : detail::quantile_edges(vals, bins);
                d.coders_.push_back(ColumnCoder::numeric(edges, col.kind == ColumnKind::Timestamp));
            }
        }
        return d;
    }

    static Discretizer fit_flat(const FlatTable& flat, std::size_t bins, BinningMethod method) {
        std::vector<std::vector<double>> values(flat.flat_schema.size());
        for (const Row& row : flat.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                detail::numeric_stream(flat.flat_schema.column(c), row[c], values[c]);
            }
        }
        return fit(flat.flat_schema, values, bins, method);
    }

    static Discretizer fit_collection(const Collection& collection, std::size_t bins,
                                      BinningMethod method) {
        std::vector<std::vector<double>> values(collection.schema.size());
        for (const auto& [id, table] : collection.tables) {
            for (const Row& row : table.rows) {
                for (std::size_t c = 0; c < row.size(); ++c) {
                    detail::numeric_stream(collection.schema.column(c), row[c], values[c]);
                }
            }
        }
        return fit(collection.schema, values, bins, method);
    }

    const Schema& schema() const { return schema_; }
    std::size_t bins() const { return bins_; }
    BinningMethod method() const { return method_; }
    std::size_t columns() const { return coders_.size(); }
    const ColumnCoder& coder(std::size_t c) const { return coders_.at(c); }

    std::vector<std::size_t> encode_row(const Row& row) const {
        if (row.size() != coders_.size()) throw std::invalid_argument("discretizer: row width mismatch");
        std::vector<std::size_t> codes(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) codes[c] = coders_[c].encode(row[c]);
        return codes;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["bins"] = bins_;
        j["method"] = to_string(method_);
        j["schema"] = schema_to_json(schema_);
        nlohmann::ordered_json coders = nlohmann::ordered_json::array();
        for (const auto& c : coders_) coders.push_back(c.to_json());
        j["columns"] = coders;
        return j;
    }

    static Discretizer from_json(const nlohmann::json& j) {
        Discretizer d;
        d.bins_ = j.at("bins").get<std::size_t>();
        d.method_ = binning_method_from_string(j.at("method").get<std::string>());
        d.schema_ = schema_from_json(j.at("schema"));
        for (const auto& c : j.at("columns")) d.coders_.push_back(ColumnCoder::from_json(c));
        if (d.coders_.size() != d.schema_.size()) {
            throw std::invalid_argument("discretizer: column count mismatch");
        }
        return d;
    }

private:
    Schema schema_;
    std::size_t bins_ = 0;
    BinningMethod method_ = BinningMethod::EqualWidth;
    std::vector<ColumnCoder> coders_;
};

}  // namespace longsynth
