#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "longsynth/core.hpp"
#include "longsynth/csv.hpp"

namespace longsynth {

// A flattened collection: one fixed-width row per user, with column order
// time-major ("all columns of t=1, then t=2, ..."), names "<col>__t<k>" for
// k in 1..length, and Null padding after a user's last real timestep.
struct FlatTable {
    Schema base_schema;
    Schema flat_schema;
    std::size_t length = 0;
    std::vector<std::string> user_ids;
    std::vector<Row> rows;

    std::size_t base_width() const { return base_schema.size(); }
};

inline Schema make_flat_schema(const Schema& base, std::size_t length) {
    std::vector<Column> columns;
    columns.reserve(base.size() * length);
    for (std::size_t t = 1; t <= length; ++t) {
        for (const Column& c : base.columns()) {
            Column flat = c;
            flat.name = c.name + "__t" + std::to_string(t);
            columns.push_back(std::move(flat));
        }
    }
    return Schema(std::move(columns));
}

inline FlatTable flatten(const Collection& collection, std::size_t length) {
    if (length < 1) throw std::invalid_argument("flatten: length must be >= 1");
    FlatTable flat;
    flat.base_schema = collection.schema;
    flat.flat_schema = make_flat_schema(collection.schema, length);
    flat.length = length;
    const std::size_t d = collection.schema.size();
    for (const auto& [id, table] : collection.tables) {
        if (table.length() > length) {
            throw std::invalid_argument("flatten: table for user " + id + " is longer than L=" +
                                        std::to_string(length) + "; truncate explicitly first");
        }
        Row row;
        row.reserve(d * length);
        for (const Row& source : table.rows) {
            for (const Value& v : source) row.push_back(v);
        }
        row.resize(d * length, Value::null());
        flat.user_ids.push_back(id);
        flat.rows.push_back(std::move(row));
    }
    return flat;
}

struct UnflattenResult {
    Collection collection;
    std::vector<std::string> dropped_users;  // rows that were entirely Null
};

// Inverse of flatten: trailing all-Null timesteps are treated as padding and
// stripped; interior all-Null timesteps are data and survive.
inline UnflattenResult unflatten(const FlatTable& flat) {
    UnflattenResult result;
    result.collection.schema = flat.base_schema;
    const std::size_t d = flat.base_width();
    for (std::size_t u = 0; u < flat.rows.size(); ++u) {
        const Row& row = flat.rows[u];
        if (row.size() != d * flat.length) throw std::invalid_argument("unflatten: row width mismatch");
        std::size_t keep = 0;
        for (std::size_t t = flat.length; t > 0; --t) {
            bool all_null = true;
            for (std::size_t c = 0; c < d; ++c) {
                if (!row[(t - 1) * d + c].is_null()) {
                    all_null = false;
                    break;
                }
            }
            if (!all_null) {
                keep = t;
                break;
            }
        }
        if (keep == 0) {
            result.dropped_users.push_back(flat.user_ids[u]);
            continue;
        }
        UserTable table;
        table.user_id = flat.user_ids[u];
        table.rows.reserve(keep);
        for (std::size_t t = 0; t < keep; ++t) {
            table.rows.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(t * d),
                                    row.begin() + static_cast<std::ptrdiff_t>((t + 1) * d));
        }
        result.collection.tables.emplace(table.user_id, std::move(table));
    }
    return result;
}

// Keeps users with at least `length` timesteps and truncates each retained
// trajectory to its first `length` rows.
inline Collection filter_truncate(const Collection& collection, std::size_t length) {
    if (length < 1) throw std::invalid_argument("filter_truncate: length must be >= 1");
    Collection out;
    out.schema = collection.schema;
    for (const auto& [id, table] : collection.tables) {
        if (table.length() < length) continue;
        UserTable copy;
        copy.user_id = id;
        copy.rows.assign(table.rows.begin(), table.rows.begin() + static_cast<std::ptrdiff_t>(length));
        out.tables.emplace(id, std::move(copy));
    }
    return out;
}

using TrajectoryDistribution = std::map<std::vector<std::string>, double>;

// Maximum-entropy distribution consistent with the exact adjacent-pair
// marginals of a length-3 trajectory distribution, i.e. the chain
// factorization P(x1) P(x2|x1) P(x3|x2). Mass assigned outside the input's
// support is exactly the spurious-trajectory phenomenon this demonstrates.
inline TrajectoryDistribution maxent_two_local(const TrajectoryDistribution& input) {
    if (input.empty()) throw std::invalid_argument("maxent_two_local: empty distribution");
    double total = 0.0;
    for (const auto& [traj, p] : input) {
        if (traj.size() != 3) throw std::invalid_argument("maxent_two_local: trajectories must have length 3");
        if (p < 0.0) throw std::invalid_argument("maxent_two_local: negative probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("maxent_two_local: input distribution is not normalized");
    }

    std::map<std::string, double> p1;
    std::map<std::string, double> p2;
    std::map<std::pair<std::string, std::string>, double> p12;
    std::map<std::pair<std::string, std::string>, double> p23;
    for (const auto& [traj, p] : input) {
        if (p == 0.0) continue;
        p1[traj[0]] += p;
        p2[traj[1]] += p;
        p12[{traj[0], traj[1]}] += p;
        p23[{traj[1], traj[2]}] += p;
    }

    TrajectoryDistribution out;
    for (const auto& [a, pa] : p1) {
        for (const auto& [ab, pab] : p12) {
            if (ab.first != a || pab == 0.0) continue;
            const std::string& b = ab.second;
            const double cond_b = pab / pa;
            for (const auto& [bc, pbc] : p23) {
                if (bc.first != b || pbc == 0.0) continue;
                const double cond_c = pbc / p2.at(b);
                const double prob = pa * cond_b * cond_c;
                if (prob > 0.0) out[{a, b, bc.second}] += prob;
            }
        }
    }
    return out;
}

// FlatTable export in the shared CSV convention (one row per user,
// row_idx always 0).
inline std::string flat_to_csv(const FlatTable& flat) {
    std::ostringstream out;
    out << "user_id,row_idx";
    for (const Column& c : flat.flat_schema.columns()) out << ',' << csv_escape(c.name);
    out << '\n';
    for (std::size_t u = 0; u < flat.rows.size(); ++u) {
        out << csv_escape(flat.user_ids[u]) << ",0";
        for (const Value& v : flat.rows[u]) out << ',' << csv_escape(v.to_text());
        out << '\n';
    }
    return out.str();
}

}  // namespace longsynth
