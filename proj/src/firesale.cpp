#include "sysrisk/firesale.hpp"

#include <algorithm>
#include <cmath>

namespace sysrisk {

void FireSaleConfig::validate() const {
    if (cap_mode == LeverageCapMode::Fixed && !(fixed_cap > 0.0))
        throw DomainError("FireSaleConfig: leverage cap must be positive");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw DomainError("FireSaleConfig: epsilon must lie in [0, 1)");
    if (max_steps < 1) throw DomainError("FireSaleConfig: max_steps must be at least 1");
    if (!(stop_tol >= 0.0)) throw DomainError("FireSaleConfig: stop_tol must be non-negative");
}

SellDecision sell_fraction(double bond_value, double other_assets, double equity, double cap, double epsilon) {
    SellDecision out;
    if (!(equity > 0.0)) throw DomainError("sell_fraction: bank has no equity left");
    if (leverage(bond_value, other_assets, equity) <= cap) return out;
    if (!(bond_value > 0.0)) {
        out.nothing_to_sell = true;
        return out;
    }
    // Solves (1 - eps) cap = ((1 - gamma) V + O) / E for gamma.
    const double gamma = (bond_value + other_assets - (1.0 - epsilon) * cap * equity) / bond_value;
    out.gamma = std::clamp(gamma, 0.0, 1.0);
    return out;
}

BalanceSheetState initial_state(const BipartiteMarket& market, const FireSaleConfig& config) {
    config.validate();
    require_valid(market);
    const Index N = market.num_banks();
    BalanceSheetState s;
    s.holdings = market.holdings;
    s.other_assets = market.other_assets();
    s.equity = market.equities();
    s.price_factor = VectorXd::Ones(market.num_assets());
    s.caps.resize(N);
    const VectorXd bonds = market.bank_totals();
    for (Index i = 0; i < N; ++i)
        s.caps(i) = config.cap_mode == LeverageCapMode::Fixed ? config.fixed_cap
                                                              : leverage(bonds(i), s.other_assets(i), s.equity(i));
    s.alive.assign(static_cast<size_t>(N), true);
    s.exhausted.assign(static_cast<size_t>(N), false);
    s.pending_liquidation.assign(static_cast<size_t>(N), false);
    return s;
}

namespace {

StepFlow advance(BalanceSheetState& s, const VectorXd& depths, const FireSaleConfig& config, bool deleverage) {
    const Index K = s.holdings.rows();
    const Index N = s.holdings.cols();
    StepFlow flow;
    flow.gamma = VectorXd::Zero(N);
    const VectorXd bonds = s.bond_values();

    for (Index i = 0; i < N; ++i) {
        const auto u = static_cast<size_t>(i);
        if (s.pending_liquidation[u]) {
            flow.gamma(i) = 1.0;
        } else if (deleverage && s.alive[u] && !s.exhausted[u]) {
            const SellDecision d = sell_fraction(bonds(i), s.other_assets(i), s.equity(i), s.caps(i), config.epsilon);
            flow.gamma(i) = d.gamma;
            flow.empty_book_flag = flow.empty_book_flag || d.nothing_to_sell;
            if (d.gamma >= 1.0) s.exhausted[u] = true;
        }
    }

    flow.sold = s.holdings * flow.gamma;
    flow.total_sold = flow.sold.sum();
    for (Index i = 0; i < N; ++i)
        if (!s.pending_liquidation[static_cast<size_t>(i)]) flow.deleveraging_sold += flow.gamma(i) * bonds(i);
    VectorXd drop(K);  // fractional price drop, capped at a total loss
    for (Index k = 0; k < K; ++k) drop(k) = std::min(flow.sold(k) / depths(k), 1.0);

    s.price_factor = s.price_factor.cwiseProduct((VectorXd::Ones(K) - drop)).cwiseMax(0.0);
    flow.losses = VectorXd::Zero(N);
    for (Index i = 0; i < N; ++i) {
        const auto u = static_cast<size_t>(i);
        if (s.alive[u]) flow.losses(i) = s.holdings.col(i).dot(drop);
        s.holdings.col(i) = ((1.0 - flow.gamma(i)) * s.holdings.col(i).array() * (1.0 - drop.array())).cwiseMax(0.0);
    }
    for (Index i = 0; i < N; ++i) {
        const auto u = static_cast<size_t>(i);
        if (s.pending_liquidation[u]) {
            s.pending_liquidation[u] = false;
            s.holdings.col(i).setZero();
            continue;
        }
        if (!s.alive[u]) continue;
        s.equity(i) = std::max(s.equity(i) - flow.losses(i), 0.0);
        if (s.equity(i) <= 0.0) {
            s.alive[u] = false;
            s.pending_liquidation[u] = true;
            flow.new_defaults.push_back(i);
        }
    }
    ++s.t;
    return flow;
}

double average_leverage(const BalanceSheetState& s) {
    const VectorXd bonds = s.bond_values();
    double sum = 0.0;
    int n = 0;
    for (Index i = 0; i < bonds.size(); ++i) {
        if (!s.alive[static_cast<size_t>(i)] || !(s.equity(i) > 0.0)) continue;
        sum += leverage(bonds(i), s.other_assets(i), s.equity(i));
        ++n;
    }
    return n > 0 ? sum / n : 0.0;
}

}  // namespace

StepFlow step(BalanceSheetState& state, const VectorXd& depths, const FireSaleConfig& config) {
    if (depths.size() != state.holdings.rows()) throw DomainError("step: need one depth per asset");
    return advance(state, depths, config, true);
}

ScenarioResult run_scenario(const BipartiteMarket& market, const FireSaleConfig& config, Index initial_defaulter) {
    const Index N = market.num_banks();
    if (initial_defaulter < 0 || initial_defaulter >= N) throw DomainError("run_scenario: bank index out of range");
    BalanceSheetState s = initial_state(market, config);
    const VectorXd depths = market.depths();
    const VectorXd bonds0 = s.bond_values();
    const VectorXd equity0 = s.equity;
    const double market0 = bonds0.sum();
    const double others0 = market0 - bonds0(initial_defaulter);

    ScenarioResult r;
    r.initial_defaulter = initial_defaulter;
    r.full_liquidations.assign(static_cast<size_t>(N), 0);
    r.leverage_path.push_back(average_leverage(s));

    auto record = [&](const StepFlow& flow, const VectorXd& books) {
        for (Index i = 0; i < N; ++i)
            if (flow.gamma(i) >= 1.0 && books(i) > 0.0) ++r.full_liquidations[static_cast<size_t>(i)];
        for (Index i : flow.new_defaults) r.induced_defaults.push_back(i);
        r.empty_book_flag = r.empty_book_flag || flow.empty_book_flag;
        r.deleveraging_sold += flow.deleveraging_sold;
        r.leverage_path.push_back(average_leverage(s));
        ++r.steps;
    };

    // Step 0: the exogenous default, whole book sold at once.
    const auto d = static_cast<size_t>(initial_defaulter);
    s.alive[d] = false;
    s.pending_liquidation[d] = true;
    {
        const VectorXd books = s.bond_values();
        const StepFlow flow = advance(s, depths, config, false);
        record(flow, books);
    }

    while (r.steps < config.max_steps) {
        const VectorXd books = s.bond_values();
        const StepFlow flow = step(s, depths, config);
        record(flow, books);
        const bool pending = std::any_of(s.pending_liquidation.begin(), s.pending_liquidation.end(),
                                         [](bool b) { return b; });
        if (flow.total_sold < config.stop_tol * market0 && !pending) break;
    }

    // Bonds outside the defaulter's book, revalued at the final prices, wherever they ended up.
    const VectorXd outside = market.asset_totals() - market.holdings.col(initial_defaulter);
    const double remaining = outside.dot(s.price_factor);
    for (Index i = 0; i < N; ++i)
        if (i != initial_defaulter) r.equity_destroyed += equity0(i) - s.equity(i);
    r.final_market_fraction = others0 > 0.0 ? std::clamp(remaining / others0, 0.0, 1.0) : 1.0;
    r.final_price_factor = s.price_factor;
    return r;
}

ContagionReport contagion_probability(const BipartiteMarket& market, const FireSaleConfig& config) {
    ContagionReport out;
    const Index N = market.num_banks();
    int events = 0;
    for (Index i = 0; i < N; ++i) {
        out.scenarios.push_back(run_scenario(market, config, i));
        if (!out.scenarios.back().induced_defaults.empty()) ++events;
    }
    out.probability = N > 0 ? static_cast<double>(events) / static_cast<double>(N) : 0.0;
    return out;
}

}  // namespace sysrisk
