#pragma once

#include <cstdint>

#include "sysrisk/market.hpp"

namespace sysrisk {

/// Parameters of a random bank/bond market.
struct SyntheticSpec {
    Index num_assets = 6;
    Index num_banks = 8;
    double density = 0.5;  // probability that a bank holds a given asset
    std::uint64_t seed = 1;
    double depth_scale = 0.4;
    double leverage_min = 12.0;  // initial leverage drawn uniformly in [min, max]
    double leverage_max = 30.0;
    double liquidity = 0.1;  // median ADV as a fraction of the amount outstanding
};

struct SyntheticData {
    BipartiteMarket market;
    VectorXd returns;
    MatrixXd covariance;
};

/// Every bank holds at least one asset and every asset has at least one holder. The covariance
/// comes from a two-factor model and is positive definite.
SyntheticData make_synthetic(const SyntheticSpec& spec);

/// Full-size configuration: 36 assets, 49 banks, density 0.51.
SyntheticSpec large_spec(std::uint64_t seed = 1);

}  // namespace sysrisk
