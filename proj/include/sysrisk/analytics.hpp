#pragma once

#include <optional>
#include <vector>

#include "sysrisk/debtrank.hpp"
#include "sysrisk/market.hpp"

namespace sysrisk {

/// DebtRank of every bank of `market` on its overlap projection.
DebtRankResult<double> market_debtrank(const BipartiteMarket& market, const DebtRankOptions& options = {});

/// Present links / (N K); a link is a strictly positive holding.
double bipartite_density(const BipartiteMarket& market);

struct ProjectionOptions {
    /// Off-diagonal weights above this count as links. Negative selects the default,
    /// 1e-9 times the mean positive off-diagonal weight.
    double link_threshold = -1.0;
};

/// Statistics of the bank projection. Self-loops are ignored throughout.
struct NetworkStats {
    Index links = 0;
    double density = 0.0;
    double avg_degree_unweighted = 0.0;
    double avg_degree_weighted = 0.0;  // mean strength, monetary units
    double clustering_unweighted = 0.0;  // 3 x triangles / connected triples
    double clustering_weighted = 0.0;    // mean Barrat coefficient
    double avg_nn_degree_unweighted = 0.0;
    double avg_nn_degree_weighted = 0.0;
    int diameter_unweighted = 0;  // longest finite shortest path
    bool connected = true;

    VectorXd degree;
    VectorXd strength;
    VectorXd local_clustering;           // unweighted, per node
    VectorXd local_clustering_weighted;  // Barrat, per node
};

NetworkStats projection_stats(const MatrixXd& exposure, const ProjectionOptions& options = {});
NetworkStats projection_stats(const OverlapNetwork& network, const ProjectionOptions& options = {});

struct ConcentrationReport {
    VectorXd per_bank;  // NaN for banks without holdings
    double mean = 0.0;  // over banks with holdings
    std::vector<Index> excluded;
};

/// Herfindahl-Hirschman index of each bank's portfolio.
ConcentrationReport hhi(const BipartiteMarket& market);

/// Ranks with ties sharing their average rank, starting at 1.
VectorXd average_ranks(const VectorXd& values);

struct RankCorrelation {
    std::optional<double> spearman;  // empty when a ranking is constant
    std::optional<double> kendall;   // tau-b
};

RankCorrelation rank_correlation(const VectorXd& a, const VectorXd& b);

struct SweepPoint {
    double c = 0.0;
    double mean_original = 0.0;
    std::optional<double> mean_optimized;
};

/// Mean DebtRank as a function of the depth scale c.
std::vector<SweepPoint> sweep_depth_scale(const BipartiteMarket& original, const std::vector<double>& c_values,
                                          const BipartiteMarket* optimized = nullptr,
                                          const DebtRankOptions& options = {});

}  // namespace sysrisk
