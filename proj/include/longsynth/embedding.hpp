#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "longsynth/core.hpp"
#include "longsynth/rng.hpp"

namespace longsynth {

// Maps a whole table to a fixed-length vector. Deterministic: the same
// table always embeds to the same vector.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(const Schema& schema, const UserTable& table) const = 0;
};

// Statistics-based stand-in for an external text embedding model. The vector
// concatenates
//   - a schema fingerprint block: each (name, kind) hashed and expanded to a
//     seeded random projection, summed over columns;
//   - per numeric/timestamp column: mean, standard deviation, first and last
//     non-null value;
//   - per categorical column: the frequency vector over schema categories;
//   - the table length;
// with every dimension z-scored against a declared fitting set.
class ReferenceEmbedder final : public Embedder {
public:
    static constexpr std::size_t kSchemaBlock = 8;

    explicit ReferenceEmbedder(const Schema& schema, std::uint64_t seed = 0)
        : schema_(schema), seed_(seed) {
        dimension_ = kSchemaBlock + 1;
        for (const Column& c : schema.columns()) {
            if (c.kind == ColumnKind::Categorical) dimension_ += c.categories.size();
            else dimension_ += 4;
        }
        fit_mean_.assign(dimension_, 0.0);
        fit_scale_.assign(dimension_, 1.0);
    }

    std::size_t dimension() const override { return dimension_; }

    // Z-scoring statistics from the fitting collection.
    void fit(const Collection& collection) {
        if (collection.tables.empty()) throw std::invalid_argument("embedder fit: empty collection");
        std::vector<double> mean(dimension_, 0.0);
        std::vector<double> sq(dimension_, 0.0);
        for (const auto& [id, table] : collection.tables) {
            const auto v = raw_vector(table);
            for (std::size_t i = 0; i < dimension_; ++i) {
                mean[i] += v[i];
                sq[i] += v[i] * v[i];
            }
        }
        const double n = static_cast<double>(collection.tables.size());
        for (std::size_t i = 0; i < dimension_; ++i) {
            mean[i] /= n;
            const double var = std::max(0.0, sq[i] / n - mean[i] * mean[i]);
            const double sd = std::sqrt(var);
            fit_mean_[i] = mean[i];
            fit_scale_[i] = sd > 1e-12 ? sd : 0.0;  // zero scale: dimension maps to 0
        }
        fitted_ = true;
    }

    bool fitted() const { return fitted_; }

    std::vector<double> embed(const Schema& schema, const UserTable& table) const override {
        if (!(schema == schema_)) throw std::invalid_argument("embedder: schema mismatch");
        std::vector<double> v = raw_vector(table);
        for (std::size_t i = 0; i < dimension_; ++i) {
            v[i] = fit_scale_[i] > 0.0 ? (v[i] - fit_mean_[i]) / fit_scale_[i]
                                       : (fitted_ ? 0.0 : v[i]);
        }
        return v;
    }

    std::vector<double> raw_vector(const UserTable& table) const {
        std::vector<double> v;
        v.reserve(dimension_);
        // Schema fingerprint: constant for a fixed schema and seed.
        std::array<double, kSchemaBlock> block{};
        for (const Column& c : schema_.columns()) {
            RandomEngine rng(derive_seed(seed_, hash_string(c.name + "|" + to_string(c.kind))));
            for (std::size_t i = 0; i < kSchemaBlock; ++i) block[i] += rng.normal();
        }
        v.insert(v.end(), block.begin(), block.end());

        for (std::size_t c = 0; c < schema_.size(); ++c) {
            const Column& col = schema_.column(c);
            if (col.kind == ColumnKind::Categorical) {
                std::vector<double> freq(col.categories.size(), 0.0);
                double total = 0.0;
                for (const Row& row : table.rows) {
                    if (row[c].is_null()) continue;
                    for (std::size_t k = 0; k < col.categories.size(); ++k) {
                        if (row[c].category() == col.categories[k]) {
                            freq[k] += 1.0;
                            break;
                        }
                    }
                    total += 1.0;
                }
                if (total > 0.0) {
                    for (double& f : freq) f /= total;
                }
                v.insert(v.end(), freq.begin(), freq.end());
            } else {
                double sum = 0.0;
                double sq = 0.0;
                double count = 0.0;
                double first = 0.0;
                double last = 0.0;
                bool seen = false;
                for (const Row& row : table.rows) {
                    if (row[c].is_null()) continue;
                    const double x = col.kind == ColumnKind::Timestamp
                                         ? static_cast<double>(row[c].seconds())
                                         : row[c].number();
                    if (!seen) {
                        first = x;
                        seen = true;
                    }
                    last = x;
                    sum += x;
                    sq += x * x;
                    count += 1.0;
                }
                const double mean = count > 0.0 ? sum / count : 0.0;
                const double var = count > 0.0 ? std::max(0.0, sq / count - mean * mean) : 0.0;
                v.push_back(mean);
                v.push_back(std::sqrt(var));
                v.push_back(first);
                v.push_back(last);
            }
        }
        v.push_back(static_cast<double>(table.length()));
        return v;
    }

private:
    Schema schema_;
    std::uint64_t seed_;
    std::size_t dimension_ = 0;
    std::vector<double> fit_mean_;
    std::vector<double> fit_scale_;
    bool fitted_ = false;
};

struct EmbeddingMatrix {
    std::vector<std::string> ids;            // sorted by user id
    std::vector<std::vector<double>> rows;
};

inline EmbeddingMatrix embed_collection(const Embedder& embedder, const Collection& collection) {
    EmbeddingMatrix out;
    out.ids.reserve(collection.tables.size());
    out.rows.reserve(collection.tables.size());
    for (const auto& [id, table] : collection.tables) {
        out.ids.push_back(id);
        out.rows.push_back(embedder.embed(collection.schema, table));
    }
    return out;
}

}  // namespace longsynth
