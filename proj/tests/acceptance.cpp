// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <unistd.h>

#include "support.hpp"
#include "sysrisk/debtrank.hpp"
#include "sysrisk/pipeline.hpp"

using namespace sysrisk;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

MatrixXd random_impact(std::mt19937_64& rng, Index n, double density) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd w = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (i != j && u(rng) < density) w(i, j) = u(rng);
    return w;
}

VectorXd random_values(std::mt19937_64& rng, Index n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = u(rng);
    return v / v.sum();
}

Outcome projection_oracle() {
    Outcome o;
    std::mt19937_64 rng(1001);
    const auto t0 = Clock::now();
    double worst = 0.0;
    bool symmetric = true;
    for (int trial = 0; trial < 200; ++trial) {
        const Index K = 1 + trial % 6;
        const Index N = 1 + (trial / 6) % 6;
        const BipartiteMarket m = testing::random_market(rng, K, N);
        const MatrixXd w = exposure_matrix(m.holdings, m.depths());
        worst = std::max(worst, testing::max_rel_diff(w, testing::exposure_triple_loop(m)));
        symmetric = symmetric && w == w.transpose();
    }
    const double secs = seconds_since(t0);
    o.require(worst <= 1e-12, "matrix form differs from the triple loop");
    o.require(symmetric, "exposure not exactly symmetric");
    o.require(secs < 5.0, "too slow");
    o.note("worst rel diff " + fmt("%.2e", worst) + ", " + fmt("%.3f", secs) + " s");
    return o;
}

Outcome debtrank_suite() {
    Outcome o;
    MatrixXd two(2, 2);
    two << 0.0, 0.5, 0.0, 0.0;
    const double r1 = debtrank_seed(two, VectorXd::Constant(2, 0.5), {0}).value;
    const double r2 = debtrank_seed(MatrixXd::Zero(4, 4), VectorXd::Constant(4, 0.25), {2}).value;
    MatrixXd full = MatrixXd::Ones(3, 3);
    full.diagonal().setZero();
    const double r3 = debtrank_seed(full, VectorXd::Constant(3, 1.0 / 3.0), {0}).value;
    o.require(std::abs(r1 - 0.25) <= 1e-15, "two-bank trace");
    o.require(r2 == 0.0, "zero-impact trace");
    o.require(std::abs(r3 - (1.0 - 1.0 / 3.0)) <= 1e-15, "complete-network trace");

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    double worst_drop = 0.0;
    int longest_excess = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 2 + trial % 7;
        const MatrixXd low = random_impact(rng, n, 0.5);
        MatrixXd high = low;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                if (i != j && u(rng) < 0.5) high(i, j) = low(i, j) + (1.0 - low(i, j)) * u(rng);
        const VectorXd v = random_values(rng, n);
        const auto a = debtrank_all(low, v, {1.0, true});
        const auto b = debtrank_all(high, v, {1.0, true});
        const double drop = (a.per_bank - b.per_bank).maxCoeff();
        if (drop > 1e-15) {
            ++violations;
            worst_drop = std::max(worst_drop, drop);
        }
        for (const auto* res : {&a, &b})
            for (const auto& run : res->runs) longest_excess = std::max(longest_excess, run.steps - static_cast<int>(n + 1));
    }
    o.require(violations == 0, "monotonicity broken on " + std::to_string(violations) + "/100 pairs (largest drop " +
                                   fmt("%.3g", worst_drop) + ")");
    o.require(longest_excess <= 0, "a run exceeded N+1 steps");
    o.note("traces " + fmt("%.17g", r1) + ", " + fmt("%g", r2) + ", " + fmt("%.17g", r3));
    return o;
}

Outcome qcqp_assembly() {
    Outcome o;
    std::mt19937_64 rng(1003);
    double worst_obj = 0.0, worst_eq = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Index K = 1 + trial % 5;
        const Index N = 1 + (trial / 5) % 5;
        const BipartiteMarket m = testing::random_market(rng, K, N);
        const QcqpInstance q = build_qcqp(m, testing::random_covariance(rng, K));
        std::uniform_real_distribution<double> u(0.0, 2e6);
        MatrixXd x(K, N);
        for (Index i = 0; i < K * N; ++i) x(i) = u(rng);
        worst_obj = std::max(worst_obj, testing::rel_diff(objective(q, vectorize(x)), testing::objective_direct(m, x)));
        const VectorXd r = MatrixXd(q.A2) * q.baseline + q.c2;
        worst_eq = std::max(worst_eq, r.cwiseAbs().maxCoeff() / q.c2.cwiseAbs().maxCoeff());
    }
    BipartiteMarket sq;
    sq.assets = {{"A", 1.0, 0.01, 10.0, 0.02, true}, {"B", 1.0, 0.01, 20.0, 0.03, true}};
    sq.banks = {{"X", 1.0, 0.0}, {"Y", 2.0, 0.0}};
    sq.holdings = MatrixXd::Ones(2, 2);
    const QcqpInstance q = build_qcqp(sq, MatrixXd::Identity(2, 2) * 1e-4);
    const bool dims = q.P0.rows() == 4 && q.P0.cols() == 4 && q.A1.rows() == 2 && q.A1.cols() == 4 &&
                      q.A2.rows() == 4 && q.A2.cols() == 4;
    o.require(worst_obj <= 1e-10, "objective differs from the direct sum");
    o.require(worst_eq <= 1e-10, "baseline breaks the margins");
    o.require(dims, "2 x 2 dimensions");
    o.note("objective " + fmt("%.2e", worst_obj) + ", margins " + fmt("%.2e", worst_eq));
    return o;
}

Outcome solver_vs_oracle() {
    Outcome o;
    std::mt19937_64 rng(1004);
    const Index shapes[][2] = {{2, 2}, {2, 3}, {3, 2}};
    const auto t0 = Clock::now();
    double worst_gap = 0.0, worst_res = 0.0;
    int never_worse = 0, improved = 0;
    const int count = 24;
    for (int trial = 0; trial < count; ++trial) {
        BipartiteMarket m = testing::random_market(rng, shapes[trial % 3][0], shapes[trial % 3][1], trial % 4 < 2 ? 1.0 : 0.8);
        if (trial % 2 == 1)
            for (auto& a : m.assets) a.expected_return = 0.02;
        const QcqpInstance q = build_qcqp(m, testing::random_covariance(rng, m.num_assets()));
        if (equality_degrees_of_freedom(q) > 2) {
            o.require(false, "corpus instance with more than two degrees of freedom");
            continue;
        }
        const Solution oracle = brute_force_oracle(q, 400);
        const Solution s = solve(q);
        worst_gap = std::max(worst_gap, testing::rel_diff(s.objective_value, oracle.objective_value));
        worst_res = std::max(worst_res, constraint_residuals(q, s.y).worst());
        never_worse += s.objective_value <= s.baseline_objective;
        improved += s.objective_value < 0.999 * s.baseline_objective;
    }
    const double secs = seconds_since(t0);
    o.require(worst_gap <= 1e-6, "objective differs from the oracle");
    o.require(never_worse == count, "worse than the baseline");
    o.require(worst_res <= 1e-8, "residuals above 1e-8");
    o.require(secs < 60.0, "too slow");
    o.note(std::to_string(count) + " instances, " + std::to_string(improved) + " improved, worst gap " +
           fmt("%.2e", worst_gap) + ", worst residual " + fmt("%.2e", worst_res) + ", " + fmt("%.2f", secs) + " s");
    return o;
}

Outcome full_size() {
    Outcome o;
    const SyntheticData syn = make_synthetic(large_spec(1));
    const auto t0 = Clock::now();
    const QcqpInstance q = build_qcqp(syn.market, syn.returns, syn.covariance, syn.market.equities());
    const Solution s = solve(q);
    const double secs = seconds_since(t0);
    const BipartiteMarket opt = apply_solution(syn.market, s.y);
    const double before = market_debtrank(syn.market).mean;
    const double after = market_debtrank(opt).mean;
    const double density = bipartite_density(syn.market);
    o.require(q.size() == 1764, "variable count");
    o.require(q.A2.rows() == 85, "equality count");
    o.require(std::abs(density - 0.51) <= 0.05, "bipartite density");
    o.require(s.feasibility.within(1e-8, 1e-8), "infeasible result");
    o.require(s.objective_value <= s.baseline_objective, "worse than the baseline");
    o.require(secs < 600.0, "too slow");
    o.require(after < before, "mean DebtRank did not fall");
    o.note("density " + fmt("%.3f", density) + ", R " + fmt("%.5f", before) + " -> " + fmt("%.5f", after) + ", " +
           fmt("%.1f", secs) + " s");
    return o;
}

Outcome firesale_limits() {
    Outcome o;
    int events = 0;
    double lowest = 1.0;
    double sold_after = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SyntheticSpec spec;
        spec.seed = seed;
        BipartiteMarket m = make_synthetic(spec).market;
        BipartiteMarket deep = m;
        for (auto& a : deep.assets) a.depth *= 1e12;
        for (const FireSaleConfig& cfg : {FireSaleConfig::moderate(), FireSaleConfig::extreme()}) {
            const ContagionReport rep = contagion_probability(deep, cfg);
            events += rep.probability > 0.0;
            for (const auto& sc : rep.scenarios) lowest = std::min(lowest, sc.final_market_fraction);
        }
        FireSaleConfig inf;
        inf.fixed_cap = std::numeric_limits<double>::infinity();
        for (Index d = 0; d < deep.num_banks(); ++d) {
            BalanceSheetState st = initial_state(deep, inf);
            st.alive[static_cast<size_t>(d)] = false;
            st.pending_liquidation[static_cast<size_t>(d)] = true;
            step(st, deep.depths(), inf);
            for (int t = 0; t < 10; ++t) sold_after += step(st, deep.depths(), inf).total_sold;
        }
        for (const auto& sc : contagion_probability(m, inf).scenarios) sold_after += sc.deleveraging_sold;
    }

    BipartiteMarket lev;
    lev.assets = {{"A", 1.0, 0.01, 1e14, 0.02, true}, {"B", 1.0, 0.01, 1e14, 0.02, true}};
    lev.banks = {{"X", 5.0, 50.0}, {"Y", 10.0, 10.0}};
    lev.holdings.resize(2, 2);
    lev.holdings << 60.0, 30.0, 40.0, 30.0;
    FireSaleConfig cap20;
    cap20.fixed_cap = 20.0;
    cap20.epsilon = 0.0;
    BalanceSheetState st = initial_state(lev, cap20);
    const StepFlow flow = step(st, lev.depths(), cap20);
    const double gap = std::abs(leverage(st.bond_values()(0), st.other_assets(0), st.equity(0)) - 20.0);

    o.require(events == 0, "contagion with very deep markets");
    o.require(lowest >= 0.999, "market fraction below 0.999 with very deep markets");
    o.require(sold_after == 0.0, "selling after step 0 with an infinite cap");
    o.require(flow.gamma(0) > 0.0 && flow.gamma(0) < 1.0 && gap <= 1e-9, "post-sale leverage off the cap");
    o.note("lowest fraction " + fmt("%.12f", lowest) + ", leverage gap " + fmt("%.2e", gap));
    return o;
}

Outcome dominance() {
    Outcome o;
    std::string rows;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const SyntheticData syn = make_synthetic(large_spec(seed));
        const QcqpInstance q = build_qcqp(syn.market, syn.returns, syn.covariance, syn.market.equities());
        const BipartiteMarket opt = apply_solution(syn.market, solve(q).y);
        for (const auto& [name, cfg] : {std::pair{"moderate", FireSaleConfig::moderate(0.025)},
                                        std::pair{"extreme", FireSaleConfig::extreme(0.025)}}) {
            const double a = contagion_probability(syn.market, cfg).probability;
            const double b = contagion_probability(opt, cfg).probability;
            if (b > a) o.require(false, "seed " + std::to_string(seed) + " " + name);
            if (std::string(name) == "extreme") rows += fmt("%.2f", a) + "->" + fmt("%.2f", b) + " ";
        }
    }
    o.note("extreme " + rows);
    return o;
}

Outcome analytics_checks() {
    Outcome o;
    for (Index K = 1; K <= 8; ++K) {
        BipartiteMarket m;
        for (Index k = 0; k < K; ++k) m.assets.push_back({"A" + std::to_string(k), 1e6, 0.01, 0.0, 0.02, false});
        m.banks = {{"B", 1e5, 0.0}};
        m.holdings = MatrixXd::Constant(K, 1, 7e5);
        if (hhi(m).per_bank(0) != 1.0 / static_cast<double>(K)) o.require(false, "HHI of a uniform portfolio, K=" + std::to_string(K));
    }
    MatrixXd tri = MatrixXd::Ones(3, 3);
    tri.diagonal().setZero();
    MatrixXd star = MatrixXd::Zero(5, 5);
    for (Index i = 1; i < 5; ++i) star(0, i) = star(i, 0) = 1.0;
    o.require(projection_stats(tri).clustering_unweighted == 1.0, "triangle clustering");
    o.require(projection_stats(star).clustering_unweighted == 0.0, "star clustering");

    VectorXd a(6);
    a << 0.3, 0.1, 0.7, 0.2, 0.9, 0.5;
    const RankCorrelation same = rank_correlation(a, a);
    const RankCorrelation flip = rank_correlation(a, -a);
    o.require(*same.spearman == 1.0 && *same.kendall == 1.0, "identical rankings");
    o.require(*flip.spearman == -1.0 && *flip.kendall == -1.0, "reversed rankings");

    const std::vector<double> cs = RunConfig{}.sweep_c;
    int increases = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SyntheticSpec spec;
        spec.seed = seed;
        const auto sweep = sweep_depth_scale(make_synthetic(spec).market, cs);
        for (size_t j = 1; j < sweep.size(); ++j)
            if (sweep[j].mean_original > sweep[j - 1].mean_original * (1.0 + 1e-12)) ++increases;
    }
    o.require(increases == 0, "mean DebtRank rose with c " + std::to_string(increases) + " times");
    o.note(std::to_string(cs.size()) + "-point sweep on 10 markets");
    return o;
}

std::string read_all(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / ("sysrisk_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const SyntheticData syn = make_synthetic(large_spec(3));
    MarketData data;
    data.market = syn.market;
    data.covariance = syn.covariance;
    data.has_returns = true;
    RunConfig cfg;
    cfg.inputs = write_market(data, root / "in");
    cfg.rng_seed = cfg.optimizer.rng_seed = 42;
    std::ostringstream log;
    cfg.output_dir = root / "a";
    const int s1 = run_pipeline(cfg, log);
    cfg.output_dir = root / "b";
    const int s2 = run_pipeline(cfg, log);
    o.require(s1 == 0 && s2 == 0, "pipeline failed: " + log.str());
    int files = 0;
    if (s1 == 0 && s2 == 0) {
        for (const auto& entry : fs::directory_iterator(root / "a")) {
            ++files;
            const auto name = entry.path().filename();
            if (name == "summary.json") {
                auto a = nlohmann::json::parse(read_all(entry.path()));
                auto b = nlohmann::json::parse(read_all(root / "b" / name));
                for (auto* j : {&a, &b}) {
                    j->erase("timestamp");
                    (*j)["config"].erase("output_dir");
                }
                o.require(a == b, "summary.json differs");
            } else {
                o.require(read_all(entry.path()) == read_all(root / "b" / name), name.string() + " differs");
            }
        }
    }
    o.note(std::to_string(files) + " report files compared");
    fs::remove_all(root);
    return o;
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"projection oracle", projection_oracle},
        {"DebtRank hand traces, monotonicity, termination", debtrank_suite},
        {"QCQP assembly", qcqp_assembly},
        {"solver vs oracle", solver_vs_oracle},
        {"full-size feasibility", full_size},
        {"fire-sale limits", firesale_limits},
        {"cross-network dominance", dominance},
        {"analytics", analytics_checks},
        {"determinism", determinism},
    };
    int failed = 0;
    int index = 0;
    for (const auto& [name, run] : criteria) {
        ++index;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
