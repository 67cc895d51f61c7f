#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sysrisk/market.hpp"

namespace sysrisk {

enum class LeverageCapMode { Fixed, Initial };

struct FireSaleConfig {
    LeverageCapMode cap_mode = LeverageCapMode::Fixed;
    double fixed_cap = 33.0;  // L' in Fixed mode; may be +infinity
    double epsilon = 0.025;
    int max_steps = 1000;
    double stop_tol = 1e-12;  // stop once a step sells less than this fraction of the initial market value

    static FireSaleConfig moderate(double epsilon = 0.025) { return {LeverageCapMode::Fixed, 33.0, epsilon}; }
    static FireSaleConfig extreme(double epsilon = 0.025) {
        return {LeverageCapMode::Initial, std::numeric_limits<double>::infinity(), epsilon};
    }

    void validate() const;
};

/// (V + O) / E.
inline double leverage(double bond_value, double other_assets, double equity) {
    if (!(equity > 0.0)) throw DomainError("leverage: equity must be positive (treat the bank as defaulted)");
    return (bond_value + other_assets) / equity;
}

struct SellDecision {
    double gamma = 0.0;
    bool nothing_to_sell = false;  // over the cap with an empty bond book
};

/// Fraction of the bond book to sell so that leverage returns to (1 - epsilon) * cap.
SellDecision sell_fraction(double bond_value, double other_assets, double equity, double cap, double epsilon);

struct BalanceSheetState {
    MatrixXd holdings;       // K x N, current market values
    VectorXd other_assets;   // O_i
    VectorXd equity;         // E_i(t)
    VectorXd price_factor;   // p_k(t) / p_k(0)
    VectorXd caps;           // L'_i
    std::vector<bool> alive;
    std::vector<bool> exhausted;          // gamma = 1 already fired; no further sales
    std::vector<bool> pending_liquidation;  // defaulted, residual book sold next step
    int t = 0;

    VectorXd bond_values() const { return holdings.colwise().sum().transpose(); }
    /// Debt_i = V_i + O_i - E_i.
    VectorXd debt() const { return bond_values() + other_assets - equity; }
};

struct StepFlow {
    VectorXd gamma;        // per bank
    VectorXd sold;         // per asset, value sold this step
    VectorXd losses;       // C_i
    std::vector<Eigen::Index> new_defaults;
    double total_sold = 0.0;
    double deleveraging_sold = 0.0;  // part of total_sold from leverage-driven sales
    bool empty_book_flag = false;  // some bank was over its cap with nothing to sell
};

/// Initial balance sheets for `market` under `config`.
BalanceSheetState initial_state(const BipartiteMarket& market, const FireSaleConfig& config);

/// One synchronous round of deleveraging, price impact and loss recognition.
StepFlow step(BalanceSheetState& state, const VectorXd& depths, const FireSaleConfig& config);

struct ScenarioResult {
    Eigen::Index initial_defaulter = 0;
    std::vector<Eigen::Index> induced_defaults;
    double final_market_fraction = 1.0;  // bonds outside the defaulter's book at final over initial prices
    double equity_destroyed = 0.0;       // excludes the initial defaulter
    std::vector<double> leverage_path;   // average leverage of surviving banks, per step from t = 0
    int steps = 0;
    std::vector<int> full_liquidations;  // number of full-book sales per bank
    double deleveraging_sold = 0.0;      // leverage-driven sales over the whole run
    bool empty_book_flag = false;
    VectorXd final_price_factor;
};

ScenarioResult run_scenario(const BipartiteMarket& market, const FireSaleConfig& config,
                            Eigen::Index initial_defaulter);

struct ContagionReport {
    double probability = 0.0;
    std::vector<ScenarioResult> scenarios;
};

ContagionReport contagion_probability(const BipartiteMarket& market, const FireSaleConfig& config);

}  // namespace sysrisk
