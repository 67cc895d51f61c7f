#include "sysrisk/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace sysrisk {

DebtRankResult<double> market_debtrank(const BipartiteMarket& market, const DebtRankOptions& options) {
    const OverlapNetwork net = project_overlap(market);
    return debtrank_all(net.impact, net.economic_value, options);
}

double bipartite_density(const BipartiteMarket& market) {
    const Index cells = market.holdings.size();
    if (cells == 0) throw DomainError("bipartite_density: empty network");
    return static_cast<double>((market.holdings.array() > 0.0).count()) / static_cast<double>(cells);
}

NetworkStats projection_stats(const MatrixXd& exposure, const ProjectionOptions& options) {
    const Index n = exposure.rows();
    if (n == 0 || exposure.cols() != n) throw DomainError("projection_stats: empty or non-square network");

    double threshold = options.link_threshold;
    if (threshold < 0.0) {
        double sum = 0.0;
        Index count = 0;
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i)
                if (i != j && exposure(i, j) > 0.0) {
                    sum += exposure(i, j);
                    ++count;
                }
        threshold = count > 0 ? 1e-9 * sum / static_cast<double>(count) : 0.0;
    }

    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adj(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) adj(i, j) = i != j && exposure(i, j) > threshold;

    NetworkStats st;
    st.degree = VectorXd::Zero(n);
    st.strength = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (adj(i, j)) {
                st.degree(i) += 1.0;
                st.strength(i) += exposure(i, j);
            }
    st.links = static_cast<Index>(st.degree.sum() / 2.0 + 0.5);
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    st.density = pairs > 0.0 ? static_cast<double>(st.links) / pairs : 0.0;
    st.avg_degree_unweighted = st.degree.mean();
    st.avg_degree_weighted = st.strength.mean();

    st.local_clustering = VectorXd::Zero(n);
    st.local_clustering_weighted = VectorXd::Zero(n);
    double closed = 0.0;
    double triples = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double k = st.degree(i);
        double triangles = 0.0;  // ordered neighbour pairs (j, h) that are linked
        double barrat = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (!adj(i, j)) continue;
            for (Index h = 0; h < n; ++h) {
                if (h == j || !adj(i, h) || !adj(j, h)) continue;
                triangles += 1.0;
                barrat += 0.5 * (exposure(i, j) + exposure(i, h));
            }
        }
        closed += triangles;
        triples += k * (k - 1.0);
        if (k >= 2.0) {
            st.local_clustering(i) = triangles / (k * (k - 1.0));
            st.local_clustering_weighted(i) = barrat / (st.strength(i) * (k - 1.0));
        }
    }
    st.clustering_unweighted = triples > 0.0 ? closed / triples : 0.0;
    st.clustering_weighted = st.local_clustering_weighted.mean();

    double nn_u = 0.0, nn_w = 0.0;
    Index active = 0;
    for (Index i = 0; i < n; ++i) {
        if (st.degree(i) == 0.0) continue;
        double sum_u = 0.0, sum_w = 0.0;
        for (Index j = 0; j < n; ++j)
            if (adj(i, j)) {
                sum_u += st.degree(j);
                sum_w += exposure(i, j) * st.degree(j);
            }
        nn_u += sum_u / st.degree(i);
        nn_w += st.strength(i) > 0.0 ? sum_w / st.strength(i) : 0.0;
        ++active;
    }
    if (active > 0) {
        st.avg_nn_degree_unweighted = nn_u / static_cast<double>(active);
        st.avg_nn_degree_weighted = nn_w / static_cast<double>(active);
    }

    // Breadth-first search from every node.
    std::vector<int> dist(static_cast<size_t>(n));
    for (Index s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        std::queue<Index> q;
        dist[static_cast<size_t>(s)] = 0;
        q.push(s);
        while (!q.empty()) {
            const Index u = q.front();
            q.pop();
            for (Index v = 0; v < n; ++v)
                if (adj(u, v) && dist[static_cast<size_t>(v)] < 0) {
                    dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
                    q.push(v);
                }
        }
        for (int d : dist) {
            if (d < 0) st.connected = false;
            st.diameter_unweighted = std::max(st.diameter_unweighted, d);
        }
    }
    return st;
}

NetworkStats projection_stats(const OverlapNetwork& network, const ProjectionOptions& options) {
    return projection_stats(network.exposure, options);
}

ConcentrationReport hhi(const BipartiteMarket& market) {
    const Index N = market.num_banks();
    ConcentrationReport r;
    r.per_bank = VectorXd::Constant(N, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    Index counted = 0;
    for (Index i = 0; i < N; ++i) {
        const double total = market.holdings.col(i).sum();
        if (!(total > 0.0)) {
            r.excluded.push_back(i);
            continue;
        }
        r.per_bank(i) = market.holdings.col(i).squaredNorm() / (total * total);
        sum += r.per_bank(i);
        ++counted;
    }
    r.mean = counted > 0 ? sum / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

VectorXd average_ranks(const VectorXd& values) {
    const Index n = values.size();
    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
    VectorXd ranks(n);
    for (Index start = 0; start < n;) {
        Index end = start + 1;
        while (end < n && values(order[static_cast<size_t>(end)]) == values(order[static_cast<size_t>(start)])) ++end;
        const double rank = 0.5 * static_cast<double>(start + end + 1);  // mean of start+1 .. end
        for (Index m = start; m < end; ++m) ranks(order[static_cast<size_t>(m)]) = rank;
        start = end;
    }
    return ranks;
}

RankCorrelation rank_correlation(const VectorXd& a, const VectorXd& b) {
    const Index n = a.size();
    if (b.size() != n) throw DomainError("rank_correlation: inputs differ in length");
    if (n < 2) throw DomainError("rank_correlation: need at least two observations");
    if (!a.allFinite() || !b.allFinite()) throw DomainError("rank_correlation: inputs must be finite");

    RankCorrelation out;
    const VectorXd ra = average_ranks(a);
    const VectorXd rb = average_ranks(b);
    const VectorXd ca = ra.array() - ra.mean();
    const VectorXd cb = rb.array() - rb.mean();
    const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    if (denom > 0.0) out.spearman = ca.dot(cb) / denom;

    double concordant_minus_discordant = 0.0;
    double ties_a = 0.0, ties_b = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            const double da = a(i) - a(j);
            const double db = b(i) - b(j);
            if (da == 0.0) ties_a += 1.0;
            if (db == 0.0) ties_b += 1.0;
            if (da != 0.0 && db != 0.0) concordant_minus_discordant += (da > 0.0) == (db > 0.0) ? 1.0 : -1.0;
        }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    const double tau_denom = std::sqrt((pairs - ties_a) * (pairs - ties_b));
    if (tau_denom > 0.0) out.kendall = concordant_minus_discordant / tau_denom;
    return out;
}

std::vector<SweepPoint> sweep_depth_scale(const BipartiteMarket& original, const std::vector<double>& c_values,
                                          const BipartiteMarket* optimized, const DebtRankOptions& options) {
    std::vector<SweepPoint> out;
    out.reserve(c_values.size());
    for (double c : c_values) {
        if (!(c > 0.0)) throw DomainError("sweep_depth_scale: c values must be positive");
        SweepPoint p;
        p.c = c;
        p.mean_original = market_debtrank(with_depth_scale(original, c), options).mean;
        if (optimized != nullptr) p.mean_optimized = market_debtrank(with_depth_scale(*optimized, c), options).mean;
        out.push_back(p);
    }
    return out;
}

}  // namespace sysrisk
