#pragma once

#include <Eigen/Dense>

namespace sysrisk {

/// Euclidean projection onto the transportation polytope
///   { X >= 0 : X.rowwise().sum() == row_totals, X.colwise().sum() == col_totals }.
///
/// The projection has the form X = max(0, Z + a 1^T + 1 b^T); the dual variables (a, b)
/// are found with a semismooth Newton method on the convex dual. Duals are kept between
/// calls so that projecting a sequence of nearby points is cheap.
class TransportProjector {
public:
    TransportProjector(Eigen::VectorXd row_totals, Eigen::VectorXd col_totals);

    Eigen::MatrixXd project(const Eigen::MatrixXd& z);

    /// Max absolute row/column-sum error of the last projection.
    double last_error() const { return last_error_; }
    int last_iterations() const { return last_iterations_; }

    const Eigen::VectorXd& row_totals() const { return rows_; }
    const Eigen::VectorXd& col_totals() const { return cols_; }

private:
    Eigen::VectorXd rows_;
    Eigen::VectorXd cols_;
    Eigen::VectorXd alpha_;
    Eigen::VectorXd beta_;
    double scale_ = 1.0;
    double last_error_ = 0.0;
    int last_iterations_ = 0;
};

/// Orthogonal projection onto the affine set of matrices with the given row and column sums
/// (no sign constraint). Closed form via double centring.
Eigen::MatrixXd project_affine_margins(const Eigen::MatrixXd& z, const Eigen::VectorXd& row_totals,
                                       const Eigen::VectorXd& col_totals);

}  // namespace sysrisk
