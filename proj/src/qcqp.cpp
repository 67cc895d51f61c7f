#include "sysrisk/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qcqp_scales.hpp"

namespace sysrisk {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseMatrix from_triplets(Index rows, Index cols, const std::vector<Triplet>& triplets) {
    SparseMatrix m(rows, cols);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

MatrixXd repaired_covariance(const MatrixXd& covariance) {
    const double magnitude = std::max(covariance.cwiseAbs().maxCoeff(), 1e-300);
    const double asymmetry = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
    if (asymmetry > 1e-9 * magnitude) {
        std::ostringstream os;
        os << "build_qcqp: covariance is not symmetric (max asymmetry " << asymmetry << ")";
        throw DomainError(os.str());
    }
    MatrixXd q = 0.5 * (covariance + covariance.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q);
    if (eig.info() != Eigen::Success) throw DomainError("build_qcqp: eigen-decomposition of covariance failed");
    const double lowest = eig.eigenvalues().minCoeff();
    if (lowest < -1e-10 * std::abs(q.trace())) {
        std::ostringstream os;
        os << "build_qcqp: covariance is not positive semidefinite (eigenvalue " << lowest << ")";
        throw DomainError(os.str());
    }
    if (lowest < 0.0) {
        const VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
        q = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        q = 0.5 * (q + q.transpose()).eval();
    }
    return q;
}

}  // namespace

VectorXd vectorize(const MatrixXd& holdings) {
    return Eigen::Map<const VectorXd>(holdings.data(), holdings.size());
}

MatrixXd devectorize(const VectorXd& y, Index num_assets, Index num_banks) {
    if (y.size() != num_assets * num_banks) throw DomainError("devectorize: length is not K*N");
    return Eigen::Map<const MatrixXd>(y.data(), num_assets, num_banks);
}

QcqpInstance build_qcqp(const BipartiteMarket& market, const VectorXd& returns, const MatrixXd& covariance,
                        const VectorXd& equities) {
    const Index K = market.num_assets();
    const Index N = market.num_banks();
    if (K < 1 || N < 1) throw DomainError("build_qcqp: empty market");
    if (market.holdings.rows() != K || market.holdings.cols() != N)
        throw DomainError("build_qcqp: holdings shape does not match assets x banks");
    if (returns.size() != K) throw DomainError("build_qcqp: need one expected return per asset");
    if (covariance.rows() != K || covariance.cols() != K) throw DomainError("build_qcqp: covariance must be K x K");
    if (equities.size() != N) throw DomainError("build_qcqp: need one equity per bank");
    if ((equities.array() <= 0.0).any()) throw DomainError("build_qcqp: equities must be positive");
    if (!covariance.allFinite() || !returns.allFinite()) throw DomainError("build_qcqp: non-finite inputs");

    QcqpInstance inst;
    inst.num_assets = K;
    inst.num_banks = N;
    inst.covariance = repaired_covariance(covariance);
    inst.returns = returns;
    inst.depths = market.depths();
    if ((inst.depths.array() <= 0.0).any()) throw DomainError("build_qcqp: depths must be positive");
    inst.bank_weights = economic_values(market.holdings).cwiseQuotient(equities);
    inst.baseline = vectorize(market.holdings);

    const Index n = K * N;
    std::vector<Triplet> t;

    // P0: row (i,k) carries v~_i / (E_i D_k) at every column (j,k).
    t.reserve(static_cast<size_t>(K * N * N));
    for (Index i = 0; i < N; ++i)
        for (Index k = 0; k < K; ++k)
            for (Index j = 0; j < N; ++j) t.emplace_back(i * K + k, j * K + k, inst.bank_weights(i) / inst.depths(k));
    inst.P0 = from_triplets(n, n, t);

    inst.P.reserve(static_cast<size_t>(N));
    for (Index i = 0; i < N; ++i) {
        t.clear();
        for (Index l = 0; l < K; ++l)
            for (Index k = 0; k < K; ++k)
                if (inst.covariance(k, l) != 0.0) t.emplace_back(i * K + k, i * K + l, inst.covariance(k, l));
        inst.P.push_back(from_triplets(n, n, t));
    }

    t.clear();
    for (Index i = 0; i < N; ++i)
        for (Index k = 0; k < K; ++k)
            if (returns(k) != 0.0) t.emplace_back(i, i * K + k, -returns(k));
    inst.A1 = from_triplets(N, n, t);
    inst.c1 = market.holdings.transpose() * returns;

    t.clear();
    for (Index i = 0; i < N; ++i)
        for (Index k = 0; k < K; ++k) {
            t.emplace_back(k, i * K + k, 1.0);
            t.emplace_back(K + i, i * K + k, 1.0);
        }
    inst.A2 = from_triplets(K + N, n, t);
    inst.c2.resize(K + N);
    inst.c2.head(K) = -market.asset_totals();
    inst.c2.tail(N) = -market.bank_totals();

    inst.variance_bounds.resize(N);
    for (Index i = 0; i < N; ++i) {
        const VectorXd x = market.holdings.col(i);
        inst.variance_bounds(i) = x.dot(inst.covariance * x);
    }
    return inst;
}

QcqpInstance build_qcqp(const BipartiteMarket& market, const MatrixXd& covariance) {
    return build_qcqp(market, market.expected_returns(), covariance, market.equities());
}

double objective(const QcqpInstance& instance, const VectorXd& y) {
    if (y.size() != instance.size()) throw DomainError("objective: y has the wrong length");
    const VectorXd p0y = instance.P0 * y;
    const VectorXd p0ty = instance.P0.transpose() * y;
    return 0.5 * (y.dot(p0ty) + y.dot(p0y));
}

namespace detail {

double equality_scale(const QcqpInstance& instance) {
    const double s = instance.c2.size() > 0 ? instance.c2.cwiseAbs().maxCoeff() : 0.0;
    return s > 0.0 ? s : 1.0;
}

VectorXd return_scales(const QcqpInstance& instance) {
    const Index N = instance.num_banks;
    const Index K = instance.num_assets;
    const double rmax = instance.returns.size() > 0 ? instance.returns.cwiseAbs().maxCoeff() : 0.0;
    VectorXd s(N);
    for (Index i = 0; i < N; ++i) {
        const double bank_total = instance.baseline.segment(i * K, K).sum();
        s(i) = std::max(std::abs(instance.c1(i)), rmax * bank_total);
        if (!(s(i) > 0.0)) s(i) = 1.0;
    }
    return s;
}

VectorXd variance_scales(const QcqpInstance& instance) {
    const Index N = instance.num_banks;
    const Index K = instance.num_assets;
    const double qmax = instance.covariance.size() > 0 ? instance.covariance.cwiseAbs().maxCoeff() : 0.0;
    VectorXd s(N);
    for (Index i = 0; i < N; ++i) {
        const double bank_total = instance.baseline.segment(i * K, K).sum();
        s(i) = instance.variance_bounds(i) > 0.0 ? instance.variance_bounds(i) : qmax * bank_total * bank_total;
        if (!(s(i) > 0.0)) s(i) = 1.0;
    }
    return s;
}

double negativity_scale(const QcqpInstance& instance) {
    const double s = instance.baseline.size() > 0 ? instance.baseline.maxCoeff() : 0.0;
    return s > 0.0 ? s : 1.0;
}

}  // namespace detail

Residuals constraint_residuals(const QcqpInstance& instance, const VectorXd& y) {
    if (y.size() != instance.size()) throw DomainError("constraint_residuals: y has the wrong length");
    Residuals r;
    r.equality_rows = instance.A2 * y + instance.c2;
    r.equality_abs = r.equality_rows.size() > 0 ? r.equality_rows.cwiseAbs().maxCoeff() : 0.0;
    r.equality = r.equality_abs / detail::equality_scale(instance);

    const VectorXd ret = instance.A1 * y + instance.c1;
    const VectorXd rs = detail::return_scales(instance);
    const VectorXd vs = detail::variance_scales(instance);
    for (Index i = 0; i < instance.num_banks; ++i) {
        r.returns = std::max(r.returns, std::max(0.0, ret(i)) / rs(i));
        const double var = y.dot(instance.P[static_cast<size_t>(i)] * y) - instance.variance_bounds(i);
        r.variance = std::max(r.variance, std::max(0.0, var) / vs(i));
    }
    r.negativity = std::max(0.0, -y.minCoeff()) / detail::negativity_scale(instance);
    return r;
}

void OptimizerConfig::validate() const {
    if (!(eq_tol > 0.0) || !(ineq_tol > 0.0)) throw DomainError("OptimizerConfig: tolerances must be positive");
    if (n_starts < 1) throw DomainError("OptimizerConfig: n_starts must be at least 1");
    if (max_iterations < 1 || max_outer < 1) throw DomainError("OptimizerConfig: iteration limits must be positive");
    if (!(initial_barrier > 0.0) || !(barrier_growth > 1.0)) throw DomainError("OptimizerConfig: invalid barrier schedule");
    if (!(gap_tol > 0.0) || !(newton_tol > 0.0)) throw DomainError("OptimizerConfig: stopping tolerances must be positive");
    if (!(start_spread >= 0.0)) throw DomainError("OptimizerConfig: start_spread must be non-negative");
}

std::string to_string(SolveStatus status) {
    return status == SolveStatus::Improved ? "Improved" : "BaselineReturned";
}

Index equality_degrees_of_freedom(const QcqpInstance& instance) {
    Eigen::FullPivLU<MatrixXd> lu{MatrixXd(instance.A2)};
    return instance.size() - lu.rank();
}

BipartiteMarket apply_solution(const BipartiteMarket& market, const VectorXd& y, double eq_tol, double clamp) {
    const Index K = market.num_assets();
    const Index N = market.num_banks();
    if (y.size() != K * N) throw DomainError("apply_solution: y has the wrong length");
    const VectorXd S = market.asset_totals();
    const VectorXd V = market.bank_totals();
    double scale = std::max(S.size() ? S.maxCoeff() : 0.0, V.size() ? V.maxCoeff() : 0.0);
    if (!(scale > 0.0)) scale = 1.0;

    MatrixXd x = devectorize(y, K, N);
    if (!x.allFinite()) throw DomainError("apply_solution: y is not finite");
    if (x.minCoeff() < -eq_tol * scale) throw DomainError("apply_solution: y has a negative entry beyond tolerance");
    const auto margin_error = [&](const MatrixXd& m) {
        return std::max((m.rowwise().sum() - S).cwiseAbs().maxCoeff(), (m.colwise().sum().transpose() - V).cwiseAbs().maxCoeff());
    };
    if (margin_error(x) > eq_tol * scale)
        throw DomainError("apply_solution: y does not preserve asset and bank totals");

    x = (x.array() < clamp * scale).select(0.0, x);
    // Clamping moves mass; proportional fitting restores the margins on the remaining support.
    for (int sweep = 0; sweep < 200 && margin_error(x) > 1e-13 * scale; ++sweep) {
        const VectorXd rows = x.rowwise().sum();
        for (Index k = 0; k < K; ++k)
            if (rows(k) > 0.0) x.row(k) *= S(k) / rows(k);
        const VectorXd cols = x.colwise().sum().transpose();
        for (Index i = 0; i < N; ++i)
            if (cols(i) > 0.0) x.col(i) *= V(i) / cols(i);
    }
    if (margin_error(x) > eq_tol * scale)
        throw DomainError("apply_solution: y does not preserve asset and bank totals");

    BipartiteMarket out = market;
    out.holdings = std::move(x);
    return out;
}

}  // namespace sysrisk
