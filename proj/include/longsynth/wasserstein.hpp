#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace longsynth {

// Exact W1 between the empirical distributions of two samples, computed as
// the integral of |F_a^{ -1 }(q) - F_b^{ -1 }(q)| over q in (0,1). Both
// quantile functions are step functions, so the integral is a finite sum
// over the merged breakpoints i/n and j/m; sample sizes may differ.
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample");
    std::vector<double> xs(a.begin(), a.end());
    std::vector<double> ys(b.begin(), b.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const std::size_t n = xs.size();
    const std::size_t m = ys.size();
    double total = 0.0;
    double q = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < n && j < m) {
        const double qi = static_cast<double>(i + 1) / static_cast<double>(n);
        const double qj = static_cast<double>(j + 1) / static_cast<double>(m);
        const double next = std::min(qi, qj);
        total += (next - q) * std::abs(xs[i] - ys[j]);
        q = next;
        if (qi <= next) ++i;
        if (qj <= next) ++j;
    }
    return total;
}

}  // namespace longsynth
