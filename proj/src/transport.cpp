#include "sysrisk/transport.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "sysrisk/errors.hpp"

namespace sysrisk {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TransportProjector::TransportProjector(VectorXd row_totals, VectorXd col_totals)
    : rows_(std::move(row_totals)), cols_(std::move(col_totals)) {
    if (rows_.size() < 1 || cols_.size() < 1) throw DomainError("TransportProjector: empty margins");
    if ((rows_.array() < 0).any() || (cols_.array() < 0).any())
        throw DomainError("TransportProjector: margins must be non-negative");
    scale_ = std::max({rows_.maxCoeff(), cols_.maxCoeff(), 1e-300});
    const double mismatch = std::abs(rows_.sum() - cols_.sum());
    if (mismatch > 1e-9 * std::max(rows_.sum(), 1e-300))
        throw DomainError("TransportProjector: row and column totals disagree");
}

MatrixXd project_affine_margins(const MatrixXd& z, const VectorXd& row_totals, const VectorXd& col_totals) {
    const auto K = static_cast<double>(z.rows());
    const auto N = static_cast<double>(z.cols());
    const VectorXd dr = row_totals - z.rowwise().sum();
    const VectorXd dc = col_totals - z.colwise().sum().transpose();
    const double shift = dr.sum() / (K * N);
    MatrixXd out = z;
    out.colwise() += dr / N;
    out.rowwise() += (dc / K).transpose() - VectorXd::Constant(z.cols(), shift).transpose();
    return out;
}

MatrixXd TransportProjector::project(const MatrixXd& z) {
    const Index K = rows_.size();
    const Index N = cols_.size();
    if (z.rows() != K || z.cols() != N) throw DomainError("TransportProjector: shape mismatch");

    if (alpha_.size() != K || beta_.size() != N) {
        // Duals of the sign-free projection; exact when no clamping occurs.
        alpha_ = (rows_ - z.rowwise().sum()) / static_cast<double>(N);
        const double shift = (rows_.sum() - z.sum()) / static_cast<double>(K * N);
        beta_ = (cols_ - z.colwise().sum().transpose()) / static_cast<double>(K) - VectorXd::Constant(N, shift);
    }

    const double tol = 4e-15 * static_cast<double>(std::max(K, N)) * scale_;
    auto shifted = [&](const VectorXd& a, const VectorXd& b) {
        MatrixXd r = z;
        r.colwise() += a;
        r.rowwise() += b.transpose();
        return r;
    };
    auto dual = [&](const MatrixXd& x, const VectorXd& a, const VectorXd& b) {
        return 0.5 * x.squaredNorm() - a.dot(rows_) - b.dot(cols_);
    };

    MatrixXd r = shifted(alpha_, beta_);
    MatrixXd x = r.cwiseMax(0.0);
    VectorXd grad(K + N);
    Eigen::MatrixXd hess(K + N, K + N);
    last_iterations_ = 0;

    for (int it = 0; it < 200; ++it) {
        // Rows or columns with nothing active have a flat dual; lift them into the active region.
        bool lifted = false;
        for (Index k = 0; k < K; ++k) {
            const double top = r.row(k).maxCoeff();
            if (top <= 0.0 && rows_(k) > 0.0) {
                alpha_(k) += -top + rows_(k) / static_cast<double>(N);
                lifted = true;
            }
        }
        for (Index i = 0; i < N; ++i) {
            const double top = r.col(i).maxCoeff();
            if (top <= 0.0 && cols_(i) > 0.0) {
                beta_(i) += -top + cols_(i) / static_cast<double>(K);
                lifted = true;
            }
        }
        if (lifted) {
            r = shifted(alpha_, beta_);
            x = r.cwiseMax(0.0);
        }

        grad.head(K) = x.rowwise().sum() - rows_;
        grad.tail(N) = x.colwise().sum().transpose() - cols_;
        last_error_ = grad.cwiseAbs().maxCoeff();
        last_iterations_ = it;
        if (last_error_ <= tol) break;

        hess.setZero();
        for (Index i = 0; i < N; ++i) {
            for (Index k = 0; k < K; ++k) {
                if (r(k, i) > 0.0) {
                    hess(k, k) += 1.0;
                    hess(K + i, K + i) += 1.0;
                    hess(k, K + i) = 1.0;
                    hess(K + i, k) = 1.0;
                }
            }
        }
        // The all-ones direction (a + t, b - t) is always in the kernel.
        hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
        const VectorXd step = -hess.ldlt().solve(grad);

        const double phi0 = dual(x, alpha_, beta_);
        const double slope = grad.dot(step);
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            VectorXd a = alpha_ + t * step.head(K);
            VectorXd b = beta_ + t * step.tail(N);
            MatrixXd rt = shifted(a, b);
            MatrixXd xt = rt.cwiseMax(0.0);
            if (dual(xt, a, b) <= phi0 + 1e-4 * t * slope) {
                alpha_ = std::move(a);
                beta_ = std::move(b);
                r = std::move(rt);
                x = std::move(xt);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // at the rounding floor
    }
    grad.head(K) = x.rowwise().sum() - rows_;
    grad.tail(N) = x.colwise().sum().transpose() - cols_;
    last_error_ = grad.cwiseAbs().maxCoeff();
    return x;
}

}  // namespace sysrisk
