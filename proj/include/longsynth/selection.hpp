#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "longsynth/accounting.hpp"
#include "longsynth/embedding.hpp"
#include "longsynth/parallel.hpp"
#include "longsynth/rng.hpp"

namespace longsynth {

struct SelectionOptions {
    // Overrides the calibrated noise scale; 0 gives the exact top-m by true
    // votes (accounting bypass for tests and diagnostics).
    std::optional<double> sigma_override;
    unsigned threads = 0;
};

struct SelectionResult {
    std::vector<std::size_t> selected;   // candidate indices, selection order
    std::vector<double> votes;           // exact vote vector
    std::vector<double> noisy_votes;
    double sigma = 0.0;
    double rho = 0.0;
};

// Indices of the k nearest rows of `rows` to `query` under Euclidean
// distance, ties broken by index (candidate id order).
inline std::vector<std::size_t> k_nearest(const std::vector<std::vector<double>>& rows,
                                          const std::vector<double>& query, std::size_t k) {
    if (k > rows.size()) throw std::invalid_argument("k_nearest: k exceeds candidate count");
    std::vector<std::pair<double, std::size_t>> scored(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double diff = rows[i][j] - query[j];
            d2 += diff * diff;
        }
        scored[i] = {d2, i};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

// Private k-NN voting: every real table adds one vote to each of its k
// nearest candidates, Gaussian noise of scale sqrt(k)/sqrt(2 rho_sel) is
// added per entry (the vote vector has L2 sensitivity exactly sqrt(k) under
// add/remove-user adjacency), and the top m_out noisy entries are released.
inline SelectionResult private_knn_select(const EmbeddingMatrix& real, const EmbeddingMatrix& cand,
                                          std::size_t k, std::size_t m_out, double epsilon_select,
                                          double delta, std::uint64_t seed,
                                          const SelectionOptions& options = {}) {
    if (k < 1) throw std::invalid_argument("private_knn_select: k must be >= 1");
    if (m_out > cand.rows.size()) {
        throw std::invalid_argument("private_knn_select: m_out exceeds candidate count");
    }
    if (real.rows.empty()) throw std::invalid_argument("private_knn_select: no real tables");
    const double sensitivity = std::sqrt(static_cast<double>(k));

    SelectionResult result;
    if (options.sigma_override) {
        result.sigma = *options.sigma_override;
        result.rho = result.sigma > 0.0 ? rho_of_gaussian(result.sigma, sensitivity) : 0.0;
    } else {
        if (epsilon_select <= 0.0) {
            throw BudgetError("private_knn_select: epsilon_select must be positive");
        }
        result.rho = rho_from_epsilon(epsilon_select, delta);
        result.sigma = gaussian_sigma(result.rho, sensitivity);
    }

    std::vector<std::vector<std::size_t>> neighbor_lists(real.rows.size());
    parallel_for(
        real.rows.size(),
        [&](std::size_t r) { neighbor_lists[r] = k_nearest(cand.rows, real.rows[r], k); },
        options.threads);

    result.votes.assign(cand.rows.size(), 0.0);
    for (const auto& neighbors : neighbor_lists) {
        for (std::size_t c : neighbors) result.votes[c] += 1.0;
    }

    result.noisy_votes = result.votes;
    if (result.sigma > 0.0) {
        RandomEngine rng(derive_seed(seed, hash_string("knn-vote-noise")));
        for (double& v : result.noisy_votes) v += rng.normal(0.0, result.sigma);
    }

    std::vector<std::size_t> order(cand.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (result.noisy_votes[a] != result.noisy_votes[b]) {
            return result.noisy_votes[a] > result.noisy_votes[b];
        }
        return a < b;
    });
    result.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m_out));
    return result;
}

}  // namespace longsynth
