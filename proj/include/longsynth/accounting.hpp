#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace longsynth {

// Zero-concentrated DP accounting. A Gaussian mechanism with L2 sensitivity
// delta and noise scale sigma costs rho = delta^2 / (2 sigma^2); rho composes
// additively and converts to (epsilon, delta)-DP via
//   epsilon = rho + 2 * sqrt(rho * ln(1/delta)).

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double epsilon_from_rho(double rho, double delta) {
    if (rho < 0.0) throw std::invalid_argument("epsilon_from_rho: negative rho");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("epsilon_from_rho: delta must be in (0,1)");
    if (rho == 0.0) return 0.0;
    return rho + 2.0 * std::sqrt(rho * std::log(1.0 / delta));
}

// Inverse of epsilon_from_rho in closed form: with s = sqrt(rho) and
// l = ln(1/delta), s^2 + 2 s sqrt(l) - epsilon = 0.
inline double rho_from_epsilon(double epsilon, double delta) {
    if (epsilon <= 0.0) throw BudgetError("rho_from_epsilon: epsilon must be positive");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("rho_from_epsilon: delta must be in (0,1)");
    const double l = std::log(1.0 / delta);
    const double s = std::sqrt(l + epsilon) - std::sqrt(l);
    return s * s;
}

inline double gaussian_sigma(double rho, double l2_sensitivity = 1.0) {
    if (rho <= 0.0) throw BudgetError("gaussian_sigma: rho must be positive");
    return l2_sensitivity / std::sqrt(2.0 * rho);
}

inline double rho_of_gaussian(double sigma, double l2_sensitivity = 1.0) {
    if (sigma <= 0.0) throw std::invalid_argument("rho_of_gaussian: sigma must be positive");
    return (l2_sensitivity * l2_sensitivity) / (2.0 * sigma * sigma);
}

struct PrivacyBudget {
    double epsilon_total = 0.0;
    double delta = 0.0;
    double epsilon_select = 0.0;

    double epsilon_train() const { return epsilon_total - epsilon_select; }

    void validate() const {
        if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("budget: delta must be in (0,1)");
        if (epsilon_select < 0.0) throw BudgetError("budget: negative selection epsilon");
        if (epsilon_train() <= 0.0 && epsilon_total > 0.0 && epsilon_select > 0.0) {
            throw BudgetError("budget: selection epsilon consumes the whole budget");
        }
    }
};

// Selection share of the total budget: 1.0 at eps_total >= 4, 0.5 at
// eps_total >= 2, 0.25 below.
inline double default_epsilon_select(double epsilon_total) {
    if (epsilon_total >= 4.0) return 1.0;
    if (epsilon_total >= 2.0) return 0.5;
    return 0.25;
}

enum class BudgetPhase { Train, Select };

struct LedgerEntry {
    std::string label;
    BudgetPhase phase = BudgetPhase::Train;
    double rho = 0.0;
    double sigma = 0.0;
    double sensitivity = 1.0;
};

// Append-only record of every noised measurement. Train and select phases
// are accounted separately and their epsilons add up to the release claim.
class ZcdpLedger {
public:
    void charge(std::string label, BudgetPhase phase, double rho, double sigma,
                double sensitivity = 1.0) {
        entries_.push_back({std::move(label), phase, rho, sigma, sensitivity});
    }

    const std::vector<LedgerEntry>& entries() const { return entries_; }

    double rho(BudgetPhase phase) const {
        double total = 0.0;
        for (const auto& e : entries_) {
            if (e.phase == phase) total += e.rho;
        }
        return total;
    }

    double rho_total() const { return rho(BudgetPhase::Train) + rho(BudgetPhase::Select); }

    double epsilon_claim(double delta) const {
        double eps = 0.0;
        const double rt = rho(BudgetPhase::Train);
        const double rs = rho(BudgetPhase::Select);
        if (rt > 0.0) eps += epsilon_from_rho(rt, delta);
        if (rs > 0.0) eps += epsilon_from_rho(rs, delta);
        return eps;
    }

    // Aborts if the accumulated training rho exceeds what the budget allows.
    void enforce(const PrivacyBudget& budget) const {
        const double cap = rho_from_epsilon(budget.epsilon_train(), budget.delta);
        if (rho(BudgetPhase::Train) > cap * (1.0 + 1e-12) + 1e-15) {
            throw BudgetError("ledger exceeds the training budget");
        }
        if (budget.epsilon_select > 0.0) {
            const double sel_cap = rho_from_epsilon(budget.epsilon_select, budget.delta);
            if (rho(BudgetPhase::Select) > sel_cap * (1.0 + 1e-12) + 1e-15) {
                throw BudgetError("ledger exceeds the selection budget");
            }
        } else if (rho(BudgetPhase::Select) > 0.0) {
            throw BudgetError("selection charged without a selection budget");
        }
    }

    nlohmann::ordered_json to_json(const PrivacyBudget& budget) const {
        nlohmann::ordered_json j;
        j["delta"] = budget.delta;
        j["epsilon_total_claim"] = budget.epsilon_total;
        j["epsilon_train_budget"] = budget.epsilon_train();
        j["epsilon_select_budget"] = budget.epsilon_select;
        j["rho_train"] = rho(BudgetPhase::Train);
        j["rho_select"] = rho(BudgetPhase::Select);
        const double rt = rho(BudgetPhase::Train);
        const double rs = rho(BudgetPhase::Select);
        j["epsilon_train_recomputed"] = rt > 0.0 ? epsilon_from_rho(rt, budget.delta) : 0.0;
        j["epsilon_select_recomputed"] = rs > 0.0 ? epsilon_from_rho(rs, budget.delta) : 0.0;
        j["epsilon_total_recomputed"] = epsilon_claim(budget.delta);
        nlohmann::ordered_json entries = nlohmann::ordered_json::array();
        for (const auto& e : entries_) {
            nlohmann::ordered_json entry;
            entry["label"] = e.label;
            entry["phase"] = e.phase == BudgetPhase::Train ? "train" : "select";
            entry["rho"] = e.rho;
            entry["sigma"] = e.sigma;
            entry["sensitivity"] = e.sensitivity;
            entries.push_back(entry);
        }
        j["entries"] = entries;
        return j;
    }

private:
    std::vector<LedgerEntry> entries_;
};

}  // namespace longsynth
