#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sysrisk/errors.hpp"

namespace sysrisk {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Asset {
    std::string id;
    double adv = 0.0;         // average daily traded volume, monetary units
    double volatility = 0.0;  // std of daily log-returns
    double depth = 0.0;       // resolved market depth D_k
    double expected_return = 0.0;
    bool depth_given = false;  // depth was ingested directly rather than derived from adv/volatility
};

struct Bank {
    std::string id;
    double equity = 0.0;        // Tier-1 equity
    double other_assets = 0.0;  // non-bond assets, constant during fire sales
};

/// Banks holding assets. `holdings(k, i)` is the monetary value of asset k held by bank i.
struct BipartiteMarket {
    std::vector<Asset> assets;
    std::vector<Bank> banks;
    MatrixXd holdings;  // K x N
    double depth_scale = 0.4;

    Index num_assets() const { return static_cast<Index>(assets.size()); }
    Index num_banks() const { return static_cast<Index>(banks.size()); }

    VectorXd depths() const;
    VectorXd equities() const;
    VectorXd other_assets() const;
    VectorXd expected_returns() const;
    /// V_i, column sums of the holdings.
    VectorXd bank_totals() const { return holdings.colwise().sum().transpose(); }
    /// S_k, row sums of the holdings.
    VectorXd asset_totals() const { return holdings.rowwise().sum(); }
    double total_value() const { return holdings.sum(); }
};

/// Liquidity-adjusted projection of a market onto its banks.
struct OverlapNetwork {
    MatrixXd exposure;       // w, N x N, symmetric, diagonal kept
    MatrixXd impact;         // W~, N x N, entries in [0, 1]
    VectorXd economic_value; // v~, sums to one
};

/// D = c * ADV / sigma.
template <typename Scalar>
Scalar market_depth(Scalar adv, Scalar volatility, Scalar c) {
    if (!(adv > Scalar(0))) throw DomainError("market_depth: adv must be positive");
    if (!(volatility > Scalar(0))) throw DomainError("market_depth: volatility must be positive");
    if (!(c > Scalar(0))) throw DomainError("market_depth: depth scale c must be positive");
    return c * adv / volatility;
}

/// Fractional price change caused by a signed traded volume (positive = net buy).
template <typename Scalar>
Scalar price_impact(Scalar signed_volume, Scalar depth) {
    if (!(depth > Scalar(0))) throw DomainError("price_impact: depth must be positive");
    return signed_volume / depth;
}

/// w = V^T D^{-1} V. The upper triangle is mirrored so the result is exactly symmetric.
template <typename DerivedV, typename DerivedD>
Eigen::Matrix<typename DerivedV::Scalar, Eigen::Dynamic, Eigen::Dynamic> exposure_matrix(
    const Eigen::MatrixBase<DerivedV>& holdings, const Eigen::MatrixBase<DerivedD>& depths) {
    using Scalar = typename DerivedV::Scalar;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (depths.size() != holdings.rows())
        throw DomainError("exposure_matrix: need one depth per asset row");
    Mat w = holdings.transpose() * depths.cwiseInverse().asDiagonal() * holdings;
    w.template triangularView<Eigen::StrictlyLower>() = w.transpose();
    return w;
}

/// W~_ij = min{1, w_ij / E_j}.
template <typename DerivedW, typename DerivedE>
Eigen::Matrix<typename DerivedW::Scalar, Eigen::Dynamic, Eigen::Dynamic> impact_matrix(
    const Eigen::MatrixBase<DerivedW>& exposure, const Eigen::MatrixBase<DerivedE>& equities) {
    using Scalar = typename DerivedW::Scalar;
    if (equities.size() != exposure.cols())
        throw DomainError("impact_matrix: need one equity per bank");
    for (Index j = 0; j < equities.size(); ++j)
        if (!(equities(j) > Scalar(0)))
            throw DomainError("impact_matrix: equity of bank " + std::to_string(j) + " is not positive");
    return (exposure * equities.cwiseInverse().asDiagonal()).cwiseMin(Scalar(1));
}

/// v~_i = V_i / sum of all holdings.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> economic_values(
    const Eigen::MatrixBase<Derived>& holdings) {
    const auto total = holdings.sum();
    if (!(total > 0)) throw DomainError("economic_values: total market value must be positive");
    return holdings.colwise().sum().transpose() / total;
}

VectorXd economic_values(const BipartiteMarket& market);

OverlapNetwork project_overlap(const BipartiteMarket& market);

struct Violation {
    std::string rule;
    Index row = -1;  // asset index, or -1
    Index col = -1;  // bank index, or -1
    std::string message;
};

/// Every invariant violation in `market`; empty iff the market is valid.
std::vector<Violation> validate_market(const BipartiteMarket& market);

/// Throws DomainError listing the first few violations.
void require_valid(const BipartiteMarket& market);

/// Copy of `market` with depths for scale c: derived depths are recomputed from adv/volatility,
/// ingested depths are rescaled by c / market.depth_scale.
BipartiteMarket with_depth_scale(const BipartiteMarket& market, double c);

}  // namespace sysrisk
