#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "qcqp_scales.hpp"
#include "sysrisk/qcqp.hpp"
#include "sysrisk/transport.hpp"

namespace sysrisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Slacks {
    VectorXd var;  // per bank
    VectorXd neg;  // per entry
    bool interior = false;

    double min() const { return std::min(var.minCoeff(), neg.minCoeff()); }
    double log_sum() const { return var.array().log().sum() + neg.array().log().sum(); }
};

struct Step {
    VectorXd dz;
    double ds = 0.0;
    double decrement = 0.0;  // squared Newton decrement
};

// The problem in scaled variables z = y / ys with the linear objective divided by the baseline
// value. The asset margins fix the total return of the system, so the per-bank return
// constraints can only hold with equality; they join the margins as linear equalities. The
// variance and sign constraints phi(z) <= 0 are divided by their residual scales, relaxed by tau
// and handled by a log barrier. The feasibility phase works with phi(z) <= s and drives the
// shared bound s below zero.
class BarrierProblem {
public:
    BarrierProblem(const QcqpInstance& inst, double f0, double tau, std::vector<bool> pinned)
        : inst_(inst),
          K_(inst.num_assets),
          N_(inst.num_banks),
          ys_(detail::negativity_scale(inst)),
          tau_(tau),
          vs_(detail::variance_scales(inst)),
          pinned_(std::move(pinned)) {
        // Only the null-space part of the gradient matters on the margins; dropping the rest
        // avoids cancellation between huge terms once the barrier weight grows.
        const SparseMatrix sym = SparseMatrix(inst.P0.transpose()) + inst.P0;
        const VectorXd full = (sym * inst.baseline) * (ys_ / f0);
        cost_ = vectorize(project_affine_margins(devectorize(full, K_, N_), VectorXd::Zero(K_), VectorXd::Zero(N_)));
        rows_ = -inst.c2.head(K_) / ys_;
        cols_ = -inst.c2.tail(N_) / ys_;
        returns_ = inst.c1 / ys_;
        const VectorXd& r = inst.returns;
        // Equal returns make the return rows multiples of the bank rows.
        with_returns_ = (r.array() - r.mean()).abs().maxCoeff() > 1e-12 * r.cwiseAbs().maxCoeff();
        // Pinned banks keep their baseline column and carry no rows. Of the remaining bank and
        // return rows the last one of each kind is implied by the asset rows.
        row_of_.assign(static_cast<size_t>(N_), -1);
        Index rows = 0;
        for (Index i = 0; i < N_; ++i)
            if (!pinned_[static_cast<size_t>(i)]) row_of_[static_cast<size_t>(i)] = rows++;
        free_ = rows;
        for (Index& r : row_of_)
            if (r == free_ - 1) r = -1;
        rank_ = K_ + (free_ - 1) * (with_returns_ ? 2 : 1);
    }

    Index num_free() const { return free_; }
    bool pinned(Index i) const { return pinned_[static_cast<size_t>(i)]; }

    double ys() const { return ys_; }
    Index num_inequalities() const { return (K_ + 1) * free_; }

    /// s - phi(z) for every inequality.
    Slacks slacks(const VectorXd& z, double s) const {
        Slacks out;
        out.var.resize(N_);
        out.neg = z.array() + (s + tau_);
        for (Index i = 0; i < N_; ++i) {
            if (pinned(i)) {
                out.var(i) = 1.0;
                out.neg.segment(i * K_, K_).setOnes();
                continue;
            }
            const auto zi = z.segment(i * K_, K_);
            out.var(i) = s + tau_ - (ys_ * ys_ * zi.dot(inst_.covariance * zi) - inst_.variance_bounds(i)) / vs_(i);
        }
        out.interior = out.min() > 0.0;
        return out;
    }

    /// Smallest s for which z is interior.
    double tightest_bound(const VectorXd& z) const { return -slacks(z, 0.0).min(); }

    /// t * (s or cost) + barrier, or +inf outside the interior.
    double value(const VectorXd& z, double s, double t, bool feasibility) const {
        const Slacks sl = slacks(z, s);
        if (!sl.interior) return kInf;
        return t * (feasibility ? s : cost_.dot(z)) - sl.log_sum();
    }

    /// value(z + alpha dz, s + alpha ds) - value(z, s), computed without cancellation.
    double change(const VectorXd& z, double s, const Step& step, double alpha, double t, bool feasibility) const {
        const Slacks a = slacks(z, s);
        const Slacks b = slacks(z + alpha * step.dz, s + alpha * step.ds);
        if (!b.interior) return kInf;
        VectorXd dneg = (alpha * step.dz).array() + alpha * step.ds;
        for (Index i = 0; i < N_; ++i)
            if (pinned(i)) dneg.segment(i * K_, K_).setZero();
        const double dlog = ((b.var - a.var).array() / a.var.array()).log1p().sum() +
                            (dneg.array() / a.neg.array()).log1p().sum();
        return t * alpha * (feasibility ? step.ds : cost_.dot(step.dz)) - dlog;
    }

    /// Newton step that also removes the equality drift. In the optimisation phase s is frozen.
    Step newton(const VectorXd& z, double s, double t, bool feasibility) const {
        const Slacks sl = slacks(z, s);
        std::vector<MatrixXd> inverses(static_cast<size_t>(N_), MatrixXd::Zero(K_, K_));
        VectorXd gz = VectorXd::Zero(z.size());   // gradient in z
        VectorXd hzs = VectorXd::Zero(z.size());  // mixed second derivative in (z, s)
        double gs = feasibility ? t : 0.0;
        double hss = 0.0;
        const MatrixXd& Q = inst_.covariance;

        for (Index i = 0; i < N_; ++i) {
            if (pinned(i)) continue;
            const auto zi = z.segment(i * K_, K_);
            const double vcoef = 2.0 * ys_ * ys_ / vs_(i);
            const VectorXd gv = vcoef * (Q * zi);
            const VectorXd ni = sl.neg.segment(i * K_, K_);
            const double vi = sl.var(i);

            VectorXd g = gv / vi;
            g.array() -= ni.array().inverse();
            if (!feasibility) g += t * cost_.segment(i * K_, K_);
            gz.segment(i * K_, K_) = g;

            VectorXd mixed = -gv / (vi * vi);
            mixed.array() += ni.array().square().inverse();
            hzs.segment(i * K_, K_) = mixed;
            gs -= 1.0 / vi + ni.array().inverse().sum();
            hss += 1.0 / (vi * vi) + ni.array().square().inverse().sum();

            MatrixXd H = (vcoef / vi) * Q;
            H.noalias() += gv * gv.transpose() / (vi * vi);
            H.diagonal().array() += ni.array().square().inverse();
            // Invert in coordinates scaled by the sign slacks, where the Hessian is at least I.
            const MatrixXd Hs = ni.asDiagonal() * H * ni.asDiagonal();
            const Eigen::LLT<MatrixXd> llt(Hs);
            MatrixXd inv = ni.asDiagonal() * llt.solve(MatrixXd::Identity(K_, K_)) * ni.asDiagonal();
            inverses[static_cast<size_t>(i)] = 0.5 * (inv + inv.transpose());
        }

        const EqualitySolver solver(*this, inverses);
        Step step;
        step.dz = solver.solve(gz, drift(z));
        if (feasibility) {
            const VectorXd dz1 = solver.solve(hzs, VectorXd::Zero(rank_));
            step.ds = -(gs + hzs.dot(step.dz)) / (hss + hzs.dot(dz1));
            step.dz += step.ds * dz1;
        }
        step.decrement = -(gz.dot(step.dz) + gs * step.ds);
        return step;
    }

    /// Smallest change that puts z back on the equalities.
    VectorXd equality_correction(const VectorXd& z) const {
        std::vector<MatrixXd> identity(static_cast<size_t>(N_), MatrixXd::Identity(K_, K_));
        for (Index i = 0; i < N_; ++i)
            if (pinned(i)) identity[static_cast<size_t>(i)].setZero();
        return EqualitySolver(*this, identity).solve(VectorXd::Zero(z.size()), drift(z));
    }

private:
    // Target minus current value of every kept equality row: asset sums, bank sums and
    // bank returns of the banks that carry rows.
    VectorXd drift(const VectorXd& z) const {
        const auto X = z.reshaped(K_, N_);
        VectorXd d(rank_);
        d.head(K_) = rows_ - X.rowwise().sum();
        for (Index i = 0; i < N_; ++i) {
            const Index row = row_of_[static_cast<size_t>(i)];
            if (row < 0) continue;
            d(K_ + row) = cols_(i) - X.col(i).sum();
            if (with_returns_) d(K_ + free_ - 1 + row) = returns_(i) - X.col(i).dot(inst_.returns);
        }
        return d;
    }

    // Solves min 1/2 d^T H d + b^T d subject to A d = target for block-diagonal H, given the
    // inverses of its blocks, through the Schur complement A H^-1 A^T.
    class EqualitySolver {
    public:
        EqualitySolver(const BarrierProblem& p, const std::vector<MatrixXd>& inverses)
            : p_(p), inverses_(inverses), schur_(MatrixXd::Zero(p.rank_, p.rank_)) {
            const Index K = p.K_;
            const Index ret0 = K + p.free_ - 1;
            for (Index i = 0; i < p.N_; ++i) {
                if (p.pinned(i)) continue;
                const MatrixXd& inv = inverses_[static_cast<size_t>(i)];
                schur_.topLeftCorner(K, K) += inv;
                const Index row = p.row_of_[static_cast<size_t>(i)];
                if (row < 0) continue;
                const VectorXd u = inv.rowwise().sum();
                schur_.block(0, K + row, K, 1) = u;
                schur_(K + row, K + row) = u.sum();
                if (p.with_returns_) {
                    const VectorXd v = inv * p.inst_.returns;
                    schur_.block(0, ret0 + row, K, 1) = v;
                    schur_(K + row, ret0 + row) = v.sum();
                    schur_(ret0 + row, ret0 + row) = p.inst_.returns.dot(v);
                }
            }
            schur_ = schur_.selfadjointView<Eigen::Upper>();
            // Equilibrate: the Schur matrix mixes very different scales.
            scale_ = schur_.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
            ldlt_.compute(scale_.asDiagonal() * schur_ * scale_.asDiagonal());
        }

        VectorXd solve(const VectorXd& b, const VectorXd& target) const {
            const Index K = p_.K_;
            const Index N = p_.N_;
            const Index ret0 = K + p_.free_ - 1;
            const VectorXd& r = p_.inst_.returns;
            VectorXd hb(b.size());
            VectorXd rhs = -target;
            for (Index i = 0; i < N; ++i) {
                const VectorXd h = inverses_[static_cast<size_t>(i)] * b.segment(i * K, K);
                hb.segment(i * K, K) = h;
                rhs.head(K) -= h;
                const Index row = p_.row_of_[static_cast<size_t>(i)];
                if (row < 0) continue;
                rhs(K + row) -= h.sum();
                if (p_.with_returns_) rhs(ret0 + row) -= r.dot(h);
            }
            VectorXd nu = VectorXd::Zero(rhs.size());
            for (int refine = 0; refine < 3; ++refine)
                nu += scale_.asDiagonal() * ldlt_.solve(scale_.asDiagonal() * (rhs - schur_ * nu));
            VectorXd d(b.size());
            for (Index i = 0; i < N; ++i) {
                VectorXd w = nu.head(K);
                const Index row = p_.row_of_[static_cast<size_t>(i)];
                if (row >= 0) {
                    w.array() += nu(K + row);
                    if (p_.with_returns_) w += nu(ret0 + row) * r;
                }
                d.segment(i * K, K) = -(hb.segment(i * K, K) + inverses_[static_cast<size_t>(i)] * w);
            }
            return d;
        }

    private:
        const BarrierProblem& p_;
        const std::vector<MatrixXd>& inverses_;
        MatrixXd schur_;
        VectorXd scale_;
        Eigen::LDLT<MatrixXd> ldlt_;
    };

    const QcqpInstance& inst_;
    Index K_, N_;
    double ys_;
    double tau_;
    VectorXd vs_;
    VectorXd cost_;
    VectorXd rows_, cols_, returns_;
    std::vector<bool> pinned_;
    std::vector<Index> row_of_;  // position among the bank rows, -1 for none
    Index free_ = 0;
    bool with_returns_ = true;
    Index rank_ = 0;
};

// A bank is pinned when no other portfolio with its total and return is nonnegative and meets
// its variance bound. This holds when it sits at the edge of the attainable returns, or when its
// baseline minimises the variance over that set, which the KKT conditions decide for supports of
// one or two assets.
std::vector<bool> pinned_banks(const QcqpInstance& inst) {
    const Index K = inst.num_assets;
    const Index N = inst.num_banks;
    const VectorXd& r = inst.returns;
    const double rtol = 1e-12 * r.cwiseAbs().maxCoeff();
    std::vector<bool> pinned(static_cast<size_t>(N), false);
    for (Index i = 0; i < N; ++i) {
        const VectorXd x = inst.baseline.segment(i * K, K);
        std::vector<Index> support;
        for (Index k = 0; k < K; ++k)
            if (x(k) > 0.0) support.push_back(k);
        if (support.empty() || support.size() > 2) continue;

        if (support.size() == 1) {
            const Index a = support[0];
            bool top = true, bottom = true;
            for (Index k = 0; k < K; ++k)
                if (k != a) {
                    top = top && r(k) < r(a) - rtol;
                    bottom = bottom && r(k) > r(a) + rtol;
                }
            if (top || bottom) {
                pinned[static_cast<size_t>(i)] = true;
                continue;
            }
        }
        const double var = x.dot(inst.covariance * x);
        if (var < inst.variance_bounds(i) * (1.0 - 1e-9)) continue;

        // Gradient of the variance must be lambda + mu r on the support and at most that elsewhere.
        const VectorXd g = inst.covariance * x;
        const double gtol = 1e-9 * g.cwiseAbs().maxCoeff();
        bool kkt = true;
        if (support.size() == 1) {
            const Index a = support[0];
            double lo = -kInf, hi = kInf;
            for (Index k = 0; k < K && kkt; ++k) {
                if (k == a) continue;
                const double slope = r(k) - r(a);
                const double room = g(k) - g(a) + gtol;
                if (std::abs(slope) <= rtol)
                    kkt = room >= 0.0;
                else if (slope > 0.0)
                    hi = std::min(hi, room / slope);
                else
                    lo = std::max(lo, room / slope);
            }
            kkt = kkt && lo <= hi;
        } else {
            const Index a = support[0], b = support[1];
            if (std::abs(r(a) - r(b)) <= rtol) continue;
            const double mu = (g(a) - g(b)) / (r(a) - r(b));
            const double lambda = g(a) - mu * r(a);
            for (Index k = 0; k < K && kkt; ++k)
                if (k != a && k != b) kkt = lambda + mu * r(k) <= g(k) + gtol;
        }
        pinned[static_cast<size_t>(i)] = kkt;
    }
    return pinned;
}

VectorXd random_start(const QcqpInstance& inst, const OptimizerConfig& config, const BarrierProblem& problem,
                      int start_index) {
    const Index K = inst.num_assets;
    const Index N = inst.num_banks;
    std::vector<Index> free;
    for (Index i = 0; i < N; ++i)
        if (!problem.pinned(i)) free.push_back(i);
    const Index F = static_cast<Index>(free.size());

    std::mt19937_64 rng(config.rng_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(start_index));
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd g(K, F);
    for (Index j = 0; j < F; ++j)
        for (Index k = 0; k < K; ++k) g(k, j) = normal(rng);
    // Null-space direction of the margin equalities of the free banks.
    g = project_affine_margins(g, VectorXd::Zero(K), VectorXd::Zero(F));
    const double amp = g.cwiseAbs().maxCoeff();
    if (amp > 0.0) g *= config.start_spread * inst.baseline.mean() / amp;

    MatrixXd base = devectorize(inst.baseline, K, N);
    MatrixXd sub = base(Eigen::all, free);
    TransportProjector proj(sub.rowwise().sum(), sub.colwise().sum().transpose());
    base(Eigen::all, free) = proj.project(sub + g);
    return vectorize(base);
}

// Damped Newton centring at fixed t. Returns false if the line search stalls or the budget runs out.
bool centre(const BarrierProblem& problem, VectorXd& z, double& s, double t, bool feasibility,
            const OptimizerConfig& config, int& iterations, double stop_below = -kInf) {
    while (iterations < config.max_iterations) {
        const Step step = problem.newton(z, s, t, feasibility);
        if (!(step.decrement > 2.0 * config.newton_tol)) return true;
        ++iterations;
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 80; ++ls, alpha *= 0.5) {
            if (problem.change(z, s, step, alpha, t, feasibility) <= -0.25 * alpha * step.decrement) {
                z += alpha * step.dz;
                s += alpha * step.ds;
                accepted = true;
                break;
            }
        }
        if (!accepted) return false;
        if (feasibility && s < stop_below) return true;
    }
    return false;
}

StartReport run_start(const QcqpInstance& inst, const OptimizerConfig& config, const BarrierProblem& problem,
                      const VectorXd& y_start, VectorXd& best_y) {
    StartReport report;
    report.objective = kInf;
    report.gap = kInf;
    const double m = static_cast<double>(problem.num_inequalities());
    VectorXd z = y_start / problem.ys();

    // Feasibility phase: push the common bound s well below zero.
    constexpr double kMargin = 1e-3;
    double s = problem.tightest_bound(z) + 1.0;
    for (double t = 1.0; s >= -kMargin && report.iterations < config.max_iterations; t *= config.barrier_growth) {
        const bool ok = centre(problem, z, s, t, true, config, report.iterations, -kMargin);
        ++report.outer_rounds;
        if (!ok || m / t < 1e-3 * std::abs(s)) break;
    }
    if (!(s < 0.0)) return report;
    s = 0.0;

    double t = config.initial_barrier;
    for (int outer = 0; outer < config.max_outer && report.iterations < config.max_iterations; ++outer) {
        ++report.outer_rounds;
        const bool centred = centre(problem, z, s, t, false, config, report.iterations);

        // The repaired point is reported when it is feasible or at least as feasible; the
        // iterate keeps it only if it stays interior.
        const VectorXd repaired = z + problem.equality_correction(z);
        VectorXd y = problem.ys() * z;
        Residuals res = constraint_residuals(inst, y);
        const Residuals repaired_res = constraint_residuals(inst, problem.ys() * repaired);
        if (repaired_res.within(config.eq_tol, config.ineq_tol) || repaired_res.worst() <= res.worst()) {
            y = problem.ys() * repaired;
            res = repaired_res;
        }
        if (std::isfinite(problem.value(repaired, 0.0, t, false))) z = repaired;
        report.gap = centred ? m / t : kInf;
        if (res.within(config.eq_tol, config.ineq_tol)) {
            const double f = objective(inst, y);
            if (f < report.objective) {
                report.objective = f;
                report.feasible = true;
                report.residuals = res;
                best_y = y;
            }
        }
        if (!centred || report.gap <= config.gap_tol) break;
        t *= config.barrier_growth;
    }
    return report;
}

}  // namespace

Solution solve(const QcqpInstance& instance, const OptimizerConfig& config) {
    config.validate();
    if (instance.baseline.size() != instance.size()) throw DomainError("solve: malformed instance");

    Solution sol;
    sol.y = instance.baseline;
    sol.baseline_objective = objective(instance, instance.baseline);
    sol.objective_value = sol.baseline_objective;
    sol.feasibility = constraint_residuals(instance, instance.baseline);
    sol.status = SolveStatus::BaselineReturned;
    if (!sol.feasibility.within(std::max(config.eq_tol, 1e-12), std::max(config.ineq_tol, 1e-12)))
        throw DomainError("solve: the baseline allocation violates the constraints; instance is corrupt");

    const VectorXd ret_gap = (instance.A1 * instance.baseline + instance.c1).cwiseQuotient(detail::return_scales(instance));
    if (ret_gap.size() > 0 && ret_gap.cwiseAbs().maxCoeff() > 1e-9)
        throw DomainError("solve: every return constraint must be tight at the baseline");

    const Index K = instance.num_assets;
    const Index N = instance.num_banks;
    // With one asset or one bank the margins pin every entry.
    if (K < 2 || N < 2 || !(sol.baseline_objective > 0.0)) return sol;

    const BarrierProblem problem(instance, sol.baseline_objective, 0.5 * config.ineq_tol, pinned_banks(instance));
    if (problem.num_free() < 2) return sol;
    double best = sol.baseline_objective;
    int best_start = -1;
    VectorXd best_y;
    for (int s = 0; s < config.n_starts; ++s) {
        const VectorXd start = s == 0 ? instance.baseline : random_start(instance, config, problem, s);
        VectorXd y;
        StartReport report = run_start(instance, config, problem, start, y);
        sol.starts_used = s + 1;
        // Ties go to the earlier start.
        if (report.feasible && report.objective < best) {
            best = report.objective;
            best_start = s;
            best_y = y;
        }
        sol.starts.push_back(std::move(report));
    }

    if (best_start >= 0 && best < sol.baseline_objective * (1.0 - config.min_improvement)) {
        sol.y = best_y;
        sol.objective_value = best;
        sol.feasibility = constraint_residuals(instance, best_y);
        sol.status = SolveStatus::Improved;
    }
    return sol;
}

}  // namespace sysrisk
