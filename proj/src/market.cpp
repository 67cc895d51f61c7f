#include "sysrisk/market.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace sysrisk {

VectorXd BipartiteMarket::depths() const {
    VectorXd d(num_assets());
    for (Index k = 0; k < d.size(); ++k) d(k) = assets[static_cast<size_t>(k)].depth;
    return d;
}

VectorXd BipartiteMarket::equities() const {
    VectorXd e(num_banks());
    for (Index i = 0; i < e.size(); ++i) e(i) = banks[static_cast<size_t>(i)].equity;
    return e;
}

VectorXd BipartiteMarket::other_assets() const {
    VectorXd o(num_banks());
    for (Index i = 0; i < o.size(); ++i) o(i) = banks[static_cast<size_t>(i)].other_assets;
    return o;
}

VectorXd BipartiteMarket::expected_returns() const {
    VectorXd r(num_assets());
    for (Index k = 0; k < r.size(); ++k) r(k) = assets[static_cast<size_t>(k)].expected_return;
    return r;
}

VectorXd economic_values(const BipartiteMarket& market) {
    return economic_values(market.holdings);
}

OverlapNetwork project_overlap(const BipartiteMarket& market) {
    if (market.holdings.rows() != market.num_assets() || market.holdings.cols() != market.num_banks())
        throw DomainError("project_overlap: holdings shape does not match assets x banks");
    OverlapNetwork net;
    net.exposure = exposure_matrix(market.holdings, market.depths());
    net.impact = impact_matrix(net.exposure, market.equities());
    const double total = market.total_value();
    if (total > 0.0) {
        net.economic_value = economic_values(market.holdings);
    } else {
        // No holdings at all: every bank is equally (ir)relevant.
        net.economic_value = VectorXd::Constant(market.num_banks(), 1.0 / static_cast<double>(market.num_banks()));
    }
    return net;
}

std::vector<Violation> validate_market(const BipartiteMarket& market) {
    std::vector<Violation> out;
    const Index K = market.num_assets();
    const Index N = market.num_banks();
    if (K < 1) out.push_back({"non_empty", -1, -1, "market has no assets"});
    if (N < 1) out.push_back({"non_empty", -1, -1, "market has no banks"});
    if (!(market.depth_scale > 0.0) || !std::isfinite(market.depth_scale))
        out.push_back({"depth_scale_positive", -1, -1, "depth scale c must be positive and finite"});
    if (market.holdings.rows() != K || market.holdings.cols() != N) {
        std::ostringstream os;
        os << "holdings are " << market.holdings.rows() << "x" << market.holdings.cols() << ", expected " << K
           << "x" << N;
        out.push_back({"holdings_shape", -1, -1, os.str()});
        return out;
    }

    std::set<std::string> seen;
    for (Index k = 0; k < K; ++k) {
        const Asset& a = market.assets[static_cast<size_t>(k)];
        if (!seen.insert(a.id).second)
            out.push_back({"unique_asset_id", k, -1, "duplicate asset id '" + a.id + "'"});
        auto check = [&](double v, const char* field, bool allow_infinite = false) {
            if (!(v > 0.0) || (!allow_infinite && !std::isfinite(v)))
                out.push_back({std::string(field) + "_positive", k, -1,
                               "asset '" + a.id + "' has non-positive or non-finite " + field});
        };
        check(a.adv, "adv");
        check(a.volatility, "volatility");
        check(a.depth, "depth", true);  // an infinitely deep market has no price impact
        if (!std::isfinite(a.expected_return))
            out.push_back({"finite_return", k, -1, "asset '" + a.id + "' has non-finite expected return"});
    }

    seen.clear();
    for (Index i = 0; i < N; ++i) {
        const Bank& b = market.banks[static_cast<size_t>(i)];
        if (!seen.insert(b.id).second)
            out.push_back({"unique_bank_id", -1, i, "duplicate bank id '" + b.id + "'"});
        if (!std::isfinite(b.equity) || !(b.equity > 0.0))
            out.push_back({"equity_positive", -1, i, "bank '" + b.id + "' has non-positive or non-finite equity"});
        if (!std::isfinite(b.other_assets) || b.other_assets < 0.0)
            out.push_back({"other_assets_nonnegative", -1, i,
                           "bank '" + b.id + "' has negative or non-finite other assets"});
    }

    for (Index i = 0; i < N; ++i) {
        for (Index k = 0; k < K; ++k) {
            const double v = market.holdings(k, i);
            if (!std::isfinite(v)) {
                out.push_back({"finite_holding", k, i, "holding is NaN or infinite"});
            } else if (v < 0.0) {
                out.push_back({"holding_nonnegative", k, i, "holding is negative"});
            }
        }
    }
    return out;
}

void require_valid(const BipartiteMarket& market) {
    const auto violations = validate_market(market);
    if (violations.empty()) return;
    std::ostringstream os;
    os << "invalid market (" << violations.size() << " violation" << (violations.size() == 1 ? "" : "s") << ")";
    const size_t shown = std::min<size_t>(violations.size(), 5);
    for (size_t n = 0; n < shown; ++n) {
        const auto& v = violations[n];
        os << "; " << v.rule;
        if (v.row >= 0) os << " asset=" << v.row;
        if (v.col >= 0) os << " bank=" << v.col;
        os << ": " << v.message;
    }
    throw DomainError(os.str());
}

BipartiteMarket with_depth_scale(const BipartiteMarket& market, double c) {
    if (!(c > 0.0)) throw DomainError("with_depth_scale: c must be positive");
    BipartiteMarket out = market;
    for (Asset& a : out.assets) {
        if (a.depth_given) {
            a.depth = a.depth * (c / market.depth_scale);
        } else {
            a.depth = market_depth(a.adv, a.volatility, c);
        }
    }
    out.depth_scale = c;
    return out;
}

}  // namespace sysrisk
