#pragma once

#include <cmath>
#include <random>
#include <string>

#include "sysrisk/market.hpp"
#include "sysrisk/qcqp.hpp"
#include "sysrisk/synthetic.hpp"

namespace testing {

using namespace sysrisk;

inline double rel_diff(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

inline double max_rel_diff(const MatrixXd& a, const MatrixXd& b) {
    const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Market with random sparse holdings; every bank and asset keeps at least one link.
inline BipartiteMarket random_market(std::mt19937_64& rng, Index K, Index N, double density = 0.6) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BipartiteMarket m;
    m.depth_scale = 0.4;
    m.holdings = MatrixXd::Zero(K, N);
    for (Index i = 0; i < N; ++i)
        for (Index k = 0; k < K; ++k)
            if (u(rng) < density) m.holdings(k, i) = 1e6 * (0.1 + 10.0 * u(rng));
    for (Index i = 0; i < N; ++i)
        if (m.holdings.col(i).sum() == 0.0) m.holdings(static_cast<Index>(u(rng) * K) % K, i) = 1e6 * (1.0 + u(rng));
    for (Index k = 0; k < K; ++k)
        if (m.holdings.row(k).sum() == 0.0) m.holdings(k, static_cast<Index>(u(rng) * N) % N) = 1e6 * (1.0 + u(rng));
    for (Index k = 0; k < K; ++k) {
        Asset a;
        a.id = "A" + std::to_string(k);
        a.adv = 1e6 * (1.0 + 50.0 * u(rng));
        a.volatility = 0.002 + 0.01 * u(rng);
        a.depth = market_depth(a.adv, a.volatility, m.depth_scale);
        a.expected_return = 0.01 + 0.03 * u(rng);
        m.assets.push_back(a);
    }
    for (Index i = 0; i < N; ++i) {
        Bank b;
        b.id = "B" + std::to_string(i);
        b.equity = 1e5 * (1.0 + 20.0 * u(rng));
        b.other_assets = 1e6 * 5.0 * u(rng);
        m.banks.push_back(b);
    }
    return m;
}

/// Exposure by the literal triple sum w_ij = sum_k V_ki V_kj / D_k.
inline MatrixXd exposure_triple_loop(const BipartiteMarket& m) {
    const Index K = m.num_assets();
    const Index N = m.num_banks();
    MatrixXd w = MatrixXd::Zero(N, N);
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < N; ++j) {
            double s = 0.0;
            for (Index k = 0; k < K; ++k) s += m.holdings(k, i) * m.holdings(k, j) / m.assets[static_cast<size_t>(k)].depth;
            w(i, j) = s;
        }
    return w;
}

/// Objective by the literal double sum over bank pairs, i = j included, with weights v_j / E_j
/// taken from the original market `base`.
inline double objective_direct(const BipartiteMarket& base, const MatrixXd& x) {
    const Index K = base.num_assets();
    const Index N = base.num_banks();
    const double total = base.holdings.sum();
    double sum = 0.0;
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < N; ++j) {
            const double weight = base.holdings.col(j).sum() / total / base.banks[static_cast<size_t>(j)].equity;
            for (Index k = 0; k < K; ++k) sum += weight * x(k, i) * x(k, j) / base.assets[static_cast<size_t>(k)].depth;
        }
    return sum;
}

/// Covariance from random loadings plus a diagonal, positive definite.
inline MatrixXd random_covariance(std::mt19937_64& rng, Index K) {
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd B(K, 2);
    for (Index k = 0; k < K; ++k)
        for (Index f = 0; f < 2; ++f) B(k, f) = 0.005 * g(rng);
    MatrixXd q = B * B.transpose();
    for (Index k = 0; k < K; ++k) q(k, k) += 1e-5 * (1.0 + std::abs(g(rng)));
    return q;
}

}  // namespace testing
