#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace longsynth {

// Dynamic time warping with the classic step pattern (1,0), (0,1), (1,1),
// absolute-difference cell cost and no step weights. The alignment starts at
// (1,1) and ends at (len_a, len_b); path_cells counts the cells on the
// optimal warping path so that normalized = total / path_cells.
struct DtwResult {
    double total = 0.0;
    std::size_t path_cells = 0;
    double normalized = 0.0;
};

namespace detail {

template <typename Cost>
DtwResult dtw_impl(std::size_t n, std::size_t m, Cost&& cost) {
    if (n == 0 || m == 0) throw std::invalid_argument("dtw: empty sequence");
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> table(n * m, kInf);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return table[i * m + j]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double c = cost(i, j);
            if (i == 0 && j == 0) {
                at(i, j) = c;
                continue;
            }
            double best = kInf;
            if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
            if (i > 0) best = std::min(best, at(i - 1, j));
            if (j > 0) best = std::min(best, at(i, j - 1));
            at(i, j) = c + best;
        }
    }
    // Backtrack, preferring the diagonal on ties.
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    std::size_t cells = 1;
    while (i > 0 || j > 0) {
        double best = kInf;
        std::size_t ni = i;
        std::size_t nj = j;
        if (i > 0 && j > 0 && at(i - 1, j - 1) < best) {
            best = at(i - 1, j - 1);
            ni = i - 1;
            nj = j - 1;
        }
        if (i > 0 && at(i - 1, j) < best) {
            best = at(i - 1, j);
            ni = i - 1;
            nj = j;
        }
        if (j > 0 && at(i, j - 1) < best) {
            best = at(i, j - 1);
            ni = i;
            nj = j - 1;
        }
        i = ni;
        j = nj;
        ++cells;
    }
    DtwResult out;
    out.total = at(n - 1, m - 1);
    out.path_cells = cells;
    out.normalized = out.total / static_cast<double>(cells);
    return out;
}

}  // namespace detail

inline DtwResult dtw(std::span<const double> a, std::span<const double> b) {
    return detail::dtw_impl(a.size(), b.size(),
                            [&](std::size_t i, std::size_t j) { return std::abs(a[i] - b[j]); });
}

// DTW over symbols with 0/1 substitution cost.
inline DtwResult dtw_categorical(std::span<const std::string> a, std::span<const std::string> b) {
    return detail::dtw_impl(a.size(), b.size(),
                            [&](std::size_t i, std::size_t j) { return a[i] == b[j] ? 0.0 : 1.0; });
}

}  // namespace longsynth
