#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "qcqp_scales.hpp"
#include "sysrisk/qcqp.hpp"

namespace sysrisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
    double lo = -kInf;
    double hi = kInf;
    bool empty() const { return !(lo <= hi); }
    void intersect(double a, double b) {
        lo = std::max(lo, a);
        hi = std::min(hi, b);
    }
};

// Restrict `iv` to { t : a t^2 + b t + c <= 0 } with a >= 0 (convex quadratic).
void restrict_quadratic(Interval& iv, double a, double b, double c, double magnitude) {
    if (a <= 1e-14 * magnitude) {
        if (std::abs(b) <= 1e-300) {
            if (c > 0.0) iv = {1.0, 0.0};
        } else if (b > 0.0) {
            iv.intersect(-kInf, -c / b);
        } else {
            iv.intersect(-c / b, kInf);
        }
        return;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) {
        iv = {1.0, 0.0};
        return;
    }
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double r1 = q / a;
    double r2 = q != 0.0 ? c / q : r1;
    if (r1 > r2) std::swap(r1, r2);
    iv.intersect(r1, r2);
}

// Exact minimisation along y = a + t d over the feasible segment.
class LineSearchOracle {
public:
    LineSearchOracle(const QcqpInstance& inst, double slack)
        : inst_(inst),
          sym_(SparseMatrix(inst.P0.transpose()) + inst.P0),
          rs_(detail::return_scales(inst)),
          vs_(detail::variance_scales(inst)),
          neg_slack_(slack * detail::negativity_scale(inst)),
          slack_(slack) {}

    Interval feasible_segment(const VectorXd& a, const VectorXd& dir) const {
        // Work with a step of the same size as the point so all coefficients are comparable.
        const double dn = dir.norm();
        if (!(dn > 0.0)) return segment_scaled(a, dir).empty() ? Interval{1.0, 0.0} : Interval{0.0, 0.0};
        const double scale = std::max(a.norm(), 1.0) / dn;
        const VectorXd d = dir * scale;
        Interval iv = segment_scaled(a, d);
        if (!iv.empty()) {
            iv.lo *= scale;
            iv.hi *= scale;
        }
        return iv;
    }

    Interval segment_scaled(const VectorXd& a, const VectorXd& d) const {
        Interval iv;
        for (Index j = 0; j < a.size() && !iv.empty(); ++j) {
            // a_j + t d_j >= -neg_slack
            restrict_quadratic(iv, 0.0, -d(j), -a(j) - neg_slack_, 1.0);
        }
        const VectorXd ra = inst_.A1 * a + inst_.c1;
        const VectorXd rd = inst_.A1 * d;
        for (Index i = 0; i < inst_.num_banks && !iv.empty(); ++i)
            restrict_quadratic(iv, 0.0, rd(i), ra(i) - slack_ * rs_(i), 1.0);
        for (Index i = 0; i < inst_.num_banks && !iv.empty(); ++i) {
            const auto& P = inst_.P[static_cast<size_t>(i)];
            const VectorXd pd = P * d;
            const double qa = a.dot(P * a);
            const double qdd = d.dot(pd);
            const double qad = a.dot(pd);
            restrict_quadratic(iv, qdd, 2.0 * qad, qa - inst_.variance_bounds(i) - slack_ * vs_(i),
                               std::max({std::abs(qdd), std::abs(qad), std::abs(qa), 1e-300}));
        }
        return iv;
    }

    /// Best t on the line (and its objective), or nothing when the line misses the feasible set.
    std::optional<std::pair<double, double>> minimise(const VectorXd& a, const VectorXd& d, int grid) const {
        const Interval iv = feasible_segment(a, d);
        if (iv.empty()) return std::nullopt;
        const VectorXd sa = sym_ * a;
        const VectorXd sd = sym_ * d;
        const double f0 = 0.5 * a.dot(sa);
        const double f1 = a.dot(sd);
        const double f2 = 0.5 * d.dot(sd);
        auto f = [&](double t) { return f0 + t * (f1 + t * f2); };

        double best_t = iv.lo;
        double best_f = f(iv.lo);
        auto consider = [&](double t) {
            const double v = f(t);
            if (v < best_f) {
                best_f = v;
                best_t = t;
            }
        };
        consider(iv.hi);
        if (f2 > 0.0) {
            const double t = -f1 / (2.0 * f2);
            if (t > iv.lo && t < iv.hi) consider(t);
        }
        for (int m = 1; m < grid; ++m) consider(iv.lo + (iv.hi - iv.lo) * m / grid);
        return std::make_pair(best_t, best_f);
    }

private:
    const QcqpInstance& inst_;
    SparseMatrix sym_;
    VectorXd rs_, vs_;
    double neg_slack_;
    double slack_;
};

Solution finish(const QcqpInstance& inst, VectorXd y) {
    Solution sol;
    sol.baseline_objective = objective(inst, inst.baseline);
    sol.objective_value = objective(inst, y);
    sol.feasibility = constraint_residuals(inst, y);
    sol.starts_used = 1;
    sol.status = sol.objective_value < sol.baseline_objective ? SolveStatus::Improved : SolveStatus::BaselineReturned;
    sol.y = std::move(y);
    return sol;
}

// Range of the first coordinate over the polygon { u : y0 + B u >= 0 }.
std::pair<double, double> first_coordinate_range(const VectorXd& y0, const MatrixXd& basis, double slack) {
    double lo = kInf;
    double hi = -kInf;
    const Index n = y0.size();
    for (Index j = 0; j < n; ++j) {
        for (Index l = j + 1; l < n; ++l) {
            const double a11 = basis(j, 0), a12 = basis(j, 1), a21 = basis(l, 0), a22 = basis(l, 1);
            const double det = a11 * a22 - a12 * a21;
            if (std::abs(det) < 1e-12) continue;
            const double s = (-y0(j) * a22 + y0(l) * a12) / det;
            const double t = (-y0(l) * a11 + y0(j) * a21) / det;
            const VectorXd y = y0 + basis.col(0) * s + basis.col(1) * t;
            if (y.minCoeff() >= -slack) {
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
        }
    }
    if (lo > hi) lo = hi = 0.0;
    return {lo, hi};
}

}  // namespace

Solution brute_force_oracle(const QcqpInstance& instance, int grid_resolution, const OracleOptions& options) {
    if (grid_resolution < 1) throw DomainError("brute_force_oracle: grid_resolution must be positive");
    const MatrixXd a2 = MatrixXd(instance.A2);
    Eigen::FullPivLU<MatrixXd> lu(a2);
    const Index dof = instance.size() - lu.rank();
    if (dof > 2) throw DomainError("brute_force_oracle: refuses instances with more than two degrees of freedom");
    if (dof == 0) return finish(instance, instance.baseline);

    // Orthonormal basis of the null space of A2.
    const MatrixXd kernel = lu.kernel();
    Eigen::HouseholderQR<MatrixXd> qr(kernel);
    const MatrixXd basis = qr.householderQ() * MatrixXd::Identity(instance.size(), dof);

    const LineSearchOracle line(instance, options.feasibility_slack);
    const VectorXd& y0 = instance.baseline;

    if (dof == 1) {
        const auto best = line.minimise(y0, basis.col(0), grid_resolution);
        if (!best) return finish(instance, y0);
        const VectorXd y = y0 + best->first * basis.col(0);
        return objective(instance, y) < objective(instance, y0) ? finish(instance, y) : finish(instance, y0);
    }

    // Two degrees of freedom: grid over s, exact minimisation over t on each line.
    const double slack = options.feasibility_slack * detail::negativity_scale(instance);
    const auto [s_lo, s_hi] = first_coordinate_range(y0, basis, slack);
    const VectorXd d = basis.col(1);
    auto line_value = [&](double s) -> std::pair<double, double> {
        const auto r = line.minimise(y0 + s * basis.col(0), d, 1);
        return r ? std::make_pair(r->second, r->first) : std::make_pair(kInf, 0.0);
    };

    double best_f = kInf, best_s = 0.0, best_t = 0.0;
    int best_m = -1;
    for (int m = 0; m <= grid_resolution; ++m) {
        const double s = s_lo + (s_hi - s_lo) * m / grid_resolution;
        const auto [f, t] = line_value(s);
        if (f < best_f) {
            best_f = f;
            best_s = s;
            best_t = t;
            best_m = m;
        }
    }
    if (best_m >= 0 && options.refine && s_hi > s_lo) {
        // Golden-section search on the bracketing cells.
        const double h = (s_hi - s_lo) / grid_resolution;
        double a = std::max(s_lo, best_s - h);
        double b = std::min(s_hi, best_s + h);
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - phi * (b - a);
        double e = a + phi * (b - a);
        auto fc = line_value(c);
        auto fe = line_value(e);
        for (int it = 0; it < 200 && (b - a) > 1e-15 * std::max(1.0, std::abs(s_hi - s_lo)); ++it) {
            if (fc.first < fe.first) {
                b = e;
                e = c;
                fe = fc;
                c = b - phi * (b - a);
                fc = line_value(c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + phi * (b - a);
                fe = line_value(e);
            }
        }
        for (const auto& [s, v] : {std::make_pair(c, fc), std::make_pair(e, fe)}) {
            if (v.first < best_f) {
                best_f = v.first;
                best_s = s;
                best_t = v.second;
            }
        }
    }
    if (best_m < 0) return finish(instance, y0);
    const VectorXd y = y0 + best_s * basis.col(0) + best_t * d;
    return objective(instance, y) < objective(instance, y0) ? finish(instance, y) : finish(instance, y0);
}

}  // namespace sysrisk
