#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sysrisk/errors.hpp"

namespace sysrisk {

enum class NodeState : std::uint8_t { Undistressed, Distressed, Inactive };

/// One DebtRank propagation started from a seed set.
template <typename Scalar>
struct DebtRankRun {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Scalar value{0};  // R_S: induced distress, seed distress excluded
    int steps = 0;    // T, the step at which no node is distressed any more
    std::vector<Vector> h;                         // h(1) .. h(T), filled when recording
    std::vector<std::vector<NodeState>> state;     // s(1) .. s(T), filled when recording
};

template <typename Scalar>
struct DebtRankResult {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector per_bank;  // R_i for single-bank seeds
    Scalar mean{0};   // arithmetic average of per_bank
    std::vector<DebtRankRun<Scalar>> runs;  // per-seed trajectories when recording
};

struct DebtRankOptions {
    double psi = 1.0;  // initial distress of seeds, 1 = default
    bool record_trajectories = false;
};

namespace detail {

template <typename DerivedW, typename DerivedV>
void check_debtrank_inputs(const Eigen::MatrixBase<DerivedW>& impact, const Eigen::MatrixBase<DerivedV>& value,
                           double psi) {
    const auto n = impact.rows();
    if (impact.cols() != n) throw DomainError("debtrank: impact matrix must be square");
    if (value.size() != n) throw DomainError("debtrank: value vector length must match impact matrix");
    if (!(psi >= 0.0 && psi <= 1.0)) throw DomainError("debtrank: psi must lie in [0, 1]");
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto w = impact(i, j);
            if (!(w >= 0 && w <= 1))
                throw DomainError("debtrank: impact entry (" + std::to_string(i) + "," + std::to_string(j) +
                                  ") outside [0, 1]");
        }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(value(i) >= 0)) throw DomainError("debtrank: economic values must be non-negative");
        sum += static_cast<double>(value(i));
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("debtrank: economic values must sum to one");
}

// Core dynamics on an impact matrix whose diagonal has already been cleared.
template <typename Scalar>
DebtRankRun<Scalar> propagate(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& impact,
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& value,
                              const std::vector<Eigen::Index>& seeds, Scalar psi, bool record) {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Eigen::Index n = impact.rows();

    Vector h = Vector::Zero(n);
    std::vector<NodeState> s(static_cast<size_t>(n), NodeState::Undistressed);
    for (auto i : seeds) {
        h(i) = psi;
        s[static_cast<size_t>(i)] = NodeState::Distressed;
    }
    const Scalar initial = h.dot(value);

    DebtRankRun<Scalar> run;
    run.steps = 1;
    if (record) {
        run.h.push_back(h);
        run.state.push_back(s);
    }

    Vector pushed(n);
    bool any_distressed = true;
    while (any_distressed) {
        // Only nodes distressed at t-1 pass on their level h_j(t-1).
        for (Eigen::Index j = 0; j < n; ++j)
            pushed(j) = s[static_cast<size_t>(j)] == NodeState::Distressed ? h(j) : Scalar(0);
        h = (h + impact.transpose() * pushed).cwiseMin(Scalar(1));

        any_distressed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& si = s[static_cast<size_t>(i)];
            if (si == NodeState::Distressed) {
                si = NodeState::Inactive;
            } else if (si == NodeState::Undistressed && h(i) > Scalar(0)) {
                si = NodeState::Distressed;
                any_distressed = true;
            }
        }
        ++run.steps;
        if (record) {
            run.h.push_back(h);
            run.state.push_back(s);
        }
    }
    run.value = h.dot(value) - initial;
    return run;
}

}  // namespace detail

/// DebtRank R_S of a seed set on impact matrix W~ (row i = impact of i on others).
/// The diagonal of the impact matrix is ignored.
template <typename DerivedW, typename DerivedV>
DebtRankRun<typename DerivedW::Scalar> debtrank_seed(const Eigen::MatrixBase<DerivedW>& impact,
                                                     const Eigen::MatrixBase<DerivedV>& value,
                                                     const std::vector<Eigen::Index>& seeds,
                                                     const DebtRankOptions& options = {}) {
    using Scalar = typename DerivedW::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    detail::check_debtrank_inputs(impact, value, options.psi);
    if (seeds.empty()) throw DomainError("debtrank: seed set must be non-empty");
    for (auto i : seeds)
        if (i < 0 || i >= impact.rows()) throw DomainError("debtrank: seed index out of range");

    Matrix w = impact;
    w.diagonal().setZero();
    return detail::propagate<Scalar>(w, value.template cast<Scalar>(), seeds, Scalar(options.psi),
                                     options.record_trajectories);
}

/// R_i for every single-bank seed and the market average R-bar.
template <typename DerivedW, typename DerivedV>
DebtRankResult<typename DerivedW::Scalar> debtrank_all(const Eigen::MatrixBase<DerivedW>& impact,
                                                       const Eigen::MatrixBase<DerivedV>& value,
                                                       const DebtRankOptions& options = {}) {
    using Scalar = typename DerivedW::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    detail::check_debtrank_inputs(impact, value, options.psi);

    Matrix w = impact;
    w.diagonal().setZero();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = value.template cast<Scalar>();
    const Eigen::Index n = w.rows();

    DebtRankResult<Scalar> result;
    result.per_bank.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto run = detail::propagate<Scalar>(w, v, {i}, Scalar(options.psi), options.record_trajectories);
        result.per_bank(i) = run.value;
        if (options.record_trajectories) result.runs.push_back(std::move(run));
    }
    result.mean = n > 0 ? result.per_bank.mean() : Scalar(0);
    return result;
}

}  // namespace sysrisk
