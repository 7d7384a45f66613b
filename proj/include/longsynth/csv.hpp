#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "longsynth/core.hpp"

namespace longsynth {

// On-disk collection format: one CSV with header
//   user_id,row_idx,<columns...>
// where the empty string encodes Null and fields follow RFC-4180 quoting,
// plus a JSON schema sidecar.

inline std::string csv_escape(const std::string& field) {
    const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

// RFC-4180 reader; handles quoted fields with embedded commas, quotes and
// newlines. Returns one vector of fields per record.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(record);
        record.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // swallow; record ends at the following '\n'
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) throw std::invalid_argument("csv: unterminated quoted field");
    if (field_started || !record.empty()) end_record();
    return records;
}

inline nlohmann::ordered_json schema_to_json(const Schema& schema) {
    nlohmann::ordered_json cols = nlohmann::ordered_json::array();
    for (const Column& c : schema.columns()) {
        nlohmann::ordered_json col;
        col["name"] = c.name;
        col["kind"] = to_string(c.kind);
        if (c.kind == ColumnKind::Categorical) col["categories"] = c.categories;
        if (c.static_id) col["static"] = true;
        cols.push_back(col);
    }
    nlohmann::ordered_json out;
    out["columns"] = cols;
    return out;
}

inline Schema schema_from_json(const nlohmann::json& j) {
    std::vector<Column> columns;
    for (const auto& col : j.at("columns")) {
        Column c;
        c.name = col.at("name").get<std::string>();
        c.kind = column_kind_from_string(col.at("kind").get<std::string>());
        if (col.contains("categories")) c.categories = col.at("categories").get<std::vector<std::string>>();
        if (col.contains("static")) c.static_id = col.at("static").get<bool>();
        columns.push_back(std::move(c));
    }
    return Schema(std::move(columns));
}

inline Value value_from_text(const Column& column, const std::string& text) {
    if (text.empty()) return Value::null();
    switch (column.kind) {
        case ColumnKind::Numeric: {
            const auto v = parse_double(text);
            if (!v) throw std::invalid_argument("non-numeric value '" + text + "' in column " + column.name);
            return Value::numeric(*v, text);
        }
        case ColumnKind::Categorical:
            return Value::categorical(text);
        case ColumnKind::Timestamp: {
            const auto ts = parse_timestamp(text);
            if (!ts) throw std::invalid_argument("invalid timestamp '" + text + "' in column " + column.name);
            return Value::timestamp(*ts);
        }
    }
    return Value::null();
}

inline std::string collection_to_csv(const Collection& collection) {
    std::ostringstream out;
    out << "user_id,row_idx";
    for (const Column& c : collection.schema.columns()) out << ',' << csv_escape(c.name);
    out << '\n';
    for (const auto& [id, table] : collection.tables) {
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            out << csv_escape(id) << ',' << r;
            for (const Value& v : table.rows[r]) out << ',' << csv_escape(v.to_text());
            out << '\n';
        }
    }
    return out.str();
}

inline Collection collection_from_csv(const std::string& text, const Schema& schema) {
    const auto records = parse_csv(text);
    if (records.empty()) throw std::invalid_argument("csv: missing header");
    const auto& header = records.front();
    if (header.size() != schema.size() + 2 || header[0] != "user_id" || header[1] != "row_idx") {
        throw std::invalid_argument("csv: header does not match schema");
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (header[c + 2] != schema.column(c).name) {
            throw std::invalid_argument("csv: header column '" + header[c + 2] +
                                        "' does not match schema column '" + schema.column(c).name + "'");
        }
    }
    std::map<std::string, std::map<long long, Row>> staged;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && rec[0].empty()) continue;  // trailing blank line
        if (rec.size() != schema.size() + 2) {
            throw std::invalid_argument("csv: record " + std::to_string(r) + " has wrong field count");
        }
        long long idx = 0;
        try {
            idx = std::stoll(rec[1]);
        } catch (const std::exception&) {
            throw std::invalid_argument("csv: bad row_idx '" + rec[1] + "' at record " +
                                        std::to_string(r));
        }
        Row row;
        row.reserve(schema.size());
        for (std::size_t c = 0; c < schema.size(); ++c) {
            row.push_back(value_from_text(schema.column(c), rec[c + 2]));
        }
        auto [it, inserted] = staged[rec[0]].emplace(idx, std::move(row));
        if (!inserted) {
            throw std::invalid_argument("csv: duplicate row_idx " + rec[1] + " for user " + rec[0]);
        }
    }
    Collection out;
    out.schema = schema;
    for (auto& [id, rows] : staged) {
        UserTable table;
        table.user_id = id;
        for (auto& [idx, row] : rows) table.rows.push_back(std::move(row));
        out.tables.emplace(id, std::move(table));
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_collection_csv(const std::string& path, const Collection& collection) {
    write_text_file(path, collection_to_csv(collection));
}

inline void write_schema_json(const std::string& path, const Schema& schema) {
    write_text_file(path, schema_to_json(schema).dump(2) + "\n");
}

inline Schema read_schema_json(const std::string& path) {
    return schema_from_json(nlohmann::json::parse(read_text_file(path)));
}

inline Collection read_collection_csv(const std::string& csv_path, const Schema& schema) {
    return collection_from_csv(read_text_file(csv_path), schema);
}

}  // namespace longsynth
