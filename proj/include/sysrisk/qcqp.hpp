#pragma once

#include <algorithm>

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "sysrisk/market.hpp"

namespace sysrisk {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Systemic-risk minimisation as a QCQP over y = vec(X), X the K x N allocation.
/// Entry y(i*K + k) is the amount of asset k held by bank i.
///
///   min_{y >= 0}  1/2 y^T (P0^T + P0) y
///   s.t.          y^T P_i y - variance_bound_i <= 0,   i = 1..N
///                 A1 y + c1 <= 0
///                 A2 y + c2  = 0
struct QcqpInstance {
    Index num_assets = 0;  // K
    Index num_banks = 0;   // N

    SparseMatrix P0;              // KN x KN, generally non-symmetric
    std::vector<SparseMatrix> P;  // N block-diagonal KN x KN matrices, covariance in block i
    SparseMatrix A1;              // N x KN
    VectorXd c1;                  // original portfolio returns
    SparseMatrix A2;              // (K+N) x KN, asset rows then bank rows
    VectorXd c2;                  // -(S_1..S_K, V_1..V_N)

    VectorXd variance_bounds;  // original portfolio variances
    VectorXd baseline;         // y0 = vec(V)
    MatrixXd covariance;       // symmetrised, PSD-repaired covariance
    VectorXd returns;          // r
    VectorXd depths;           // D
    VectorXd bank_weights;     // v~_i / E_i, frozen at the original market

    Index size() const { return num_assets * num_banks; }
};

/// Builds the instance for `market` using its current holdings as the baseline.
/// The covariance must be symmetric to 1e-9 (relative). Eigenvalues down to -1e-10 times the trace
/// are clipped to zero; anything more negative is rejected.
QcqpInstance build_qcqp(const BipartiteMarket& market, const VectorXd& returns, const MatrixXd& covariance,
                        const VectorXd& equities);

/// Same as above with returns and equities taken from `market`.
QcqpInstance build_qcqp(const BipartiteMarket& market, const MatrixXd& covariance);

/// 1/2 y^T (P0^T + P0) y.
double objective(const QcqpInstance& instance, const VectorXd& y);

/// Max violation of each constraint family. The relative figures are what tolerances apply to.
struct Residuals {
    double equality = 0.0;    // max |A2 y + c2| / max |c2|
    double returns = 0.0;     // max over i of max(0, (A1 y + c1)_i) / return scale_i
    double variance = 0.0;    // max over i of max(0, y^T P_i y - bound_i) / bound_i
    double negativity = 0.0;  // max(0, -min y) / max y0
    double equality_abs = 0.0;
    VectorXd equality_rows;  // A2 y + c2

    bool within(double eq_tol, double ineq_tol) const {
        return equality <= eq_tol && returns <= ineq_tol && variance <= ineq_tol && negativity <= ineq_tol;
    }
    double worst() const { return std::max({equality, returns, variance, negativity}); }
};

Residuals constraint_residuals(const QcqpInstance& instance, const VectorXd& y);

struct OptimizerConfig {
    double eq_tol = 1e-8;
    double ineq_tol = 1e-8;
    int max_iterations = 2000;  // Newton steps per start, all barrier rounds together
    int max_outer = 60;         // barrier rounds per start
    int n_starts = 4;
    std::uint64_t rng_seed = 0;
    double initial_barrier = 1.0;  // weight t on the scaled objective in the first round
    double barrier_growth = 8.0;
    double gap_tol = 1e-12;     // stop once the duality gap bound falls below this, relative to the baseline
    double start_spread = 0.5;  // size of random start perturbations, relative to the mean holding
    double newton_tol = 1e-10;  // centring stops when half the squared Newton decrement is below this
    /// An improvement smaller than this (relative to the baseline objective) reports BaselineReturned.
    double min_improvement = 1e-9;

    void validate() const;
};

enum class SolveStatus { Improved, BaselineReturned };

std::string to_string(SolveStatus status);

struct StartReport {
    double objective = 0.0;
    bool feasible = false;
    int iterations = 0;    // Newton steps
    int outer_rounds = 0;  // barrier rounds
    double gap = 0.0;      // duality gap bound of the last round (relative), infinite if centring stalled
    Residuals residuals;
};

struct Solution {
    VectorXd y;
    double objective_value = 0.0;
    double baseline_objective = 0.0;
    Residuals feasibility;
    int starts_used = 0;
    SolveStatus status = SolveStatus::BaselineReturned;
    std::vector<StartReport> starts;
};

/// Multi-start primal log-barrier method. On the affine set A2 y + c2 = 0 the objective is
/// linear (its Hessian vanishes on the null space of A2), so each start is a convex interior-point
/// run. The asset margins fix the total return, so every return constraint holds with equality
/// and they are kept as equalities next to the margins. Banks whose baseline is the only
/// admissible portfolio stay fixed. The variance and sign constraints are relaxed by half their
/// tolerance; a feasibility phase finds an interior point from each start. Start 1 is the
/// baseline, so the result is never worse than it. Throws DomainError when c1 is not the
/// baseline return of each bank, as build_qcqp sets it.
Solution solve(const QcqpInstance& instance, const OptimizerConfig& config = {});

struct OracleOptions {
    bool refine = true;            // golden-section refinement around the best grid cell (2 DOF)
    double feasibility_slack = 1e-12;  // relative slack when filtering inequality constraints
};

/// Exhaustive search over the feasible set for instances with at most two degrees of freedom
/// in the margin equalities. Throws DomainError for larger instances.
Solution brute_force_oracle(const QcqpInstance& instance, int grid_resolution, const OracleOptions& options = {});

/// Dimension of the null space of A2.
Index equality_degrees_of_freedom(const QcqpInstance& instance);

/// New market with holdings taken from y. Entries below `clamp` (relative to the largest
/// margin) become exact zeros. Throws DomainError when y breaks the margins.
BipartiteMarket apply_solution(const BipartiteMarket& market, const VectorXd& y, double eq_tol = 1e-8,
                               double clamp = 1e-12);

/// y = vec(X) and back.
VectorXd vectorize(const MatrixXd& holdings);
MatrixXd devectorize(const VectorXd& y, Index num_assets, Index num_banks);

}  // namespace sysrisk
