#include "sysrisk/synthetic.hpp"

#include <random>
#include <string>

namespace sysrisk {

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    const Index K = spec.num_assets;
    const Index N = spec.num_banks;
    if (K < 1 || N < 1) throw DomainError("make_synthetic: need at least one asset and one bank");
    if (!(spec.density > 0.0 && spec.density <= 1.0)) throw DomainError("make_synthetic: density must lie in (0, 1]");
    if (!(spec.leverage_min > 1.0 && spec.leverage_max >= spec.leverage_min))
        throw DomainError("make_synthetic: leverage range must satisfy 1 < min <= max");
    if (!(spec.liquidity > 0.0)) throw DomainError("make_synthetic: liquidity must be positive");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::lognormal_distribution<double> size(0.0, 1.0);
    std::lognormal_distribution<double> weight(0.0, 0.8);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> held(K, N);
    for (Index i = 0; i < N; ++i)
        for (Index k = 0; k < K; ++k) held(k, i) = unit(rng) < spec.density;
    for (Index i = 0; i < N; ++i)
        if (!held.col(i).any()) held(static_cast<Index>(unit(rng) * K) % K, i) = true;
    for (Index k = 0; k < K; ++k)
        if (!held.row(k).any()) held(k, static_cast<Index>(unit(rng) * N) % N) = true;

    SyntheticData out;
    BipartiteMarket& m = out.market;
    m.depth_scale = spec.depth_scale;
    m.holdings = MatrixXd::Zero(K, N);
    for (Index i = 0; i < N; ++i) {
        const double bank_size = 1e9 * size(rng);
        double sum = 0.0;
        for (Index k = 0; k < K; ++k)
            if (held(k, i)) sum += (m.holdings(k, i) = weight(rng));
        m.holdings.col(i) *= bank_size / sum;
    }

    const VectorXd outstanding = m.holdings.rowwise().sum();
    MatrixXd loadings(K, 2);
    VectorXd vol(K);
    out.returns.resize(K);
    for (Index k = 0; k < K; ++k) {
        Asset a;
        a.id = "A" + std::to_string(k + 1);
        a.volatility = 0.002 + 0.008 * unit(rng);
        a.adv = spec.liquidity * outstanding(k) * std::exp(0.5 * gauss(rng));
        a.depth = market_depth(a.adv, a.volatility, spec.depth_scale);
        a.expected_return = 0.005 + 0.03 * unit(rng);
        out.returns(k) = a.expected_return;
        vol(k) = a.volatility;
        loadings(k, 0) = 0.6 + 0.3 * unit(rng);
        loadings(k, 1) = 0.4 * gauss(rng);
        m.assets.push_back(a);
    }
    // Correlation from two factors plus idiosyncratic noise, scaled to the volatilities.
    MatrixXd corr = loadings * loadings.transpose();
    for (Index k = 0; k < K; ++k) corr(k, k) = 1.0;
    const VectorXd norm = (loadings.rowwise().squaredNorm().array() + 0.25).sqrt();
    for (Index k = 0; k < K; ++k)
        for (Index l = 0; l < K; ++l)
            if (k != l) corr(k, l) /= norm(k) * norm(l);
    out.covariance = vol.asDiagonal() * corr * vol.asDiagonal();

    const VectorXd totals = m.bank_totals();
    for (Index i = 0; i < N; ++i) {
        Bank b;
        b.id = "B" + std::to_string(i + 1);
        b.other_assets = totals(i) * (1.0 + 3.0 * unit(rng));
        const double lev = spec.leverage_min + (spec.leverage_max - spec.leverage_min) * unit(rng);
        b.equity = (totals(i) + b.other_assets) / lev;
        m.banks.push_back(b);
    }
    return out;
}

SyntheticSpec large_spec(std::uint64_t seed) {
    SyntheticSpec s;
    s.num_assets = 36;
    s.num_banks = 49;
    s.density = 0.51;
    s.seed = seed;
    return s;
}

}  // namespace sysrisk
