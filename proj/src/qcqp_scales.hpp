#pragma once

#include "sysrisk/qcqp.hpp"

namespace sysrisk::detail {

// Normalisers used by constraint_residuals; the solver tightens against the same scales.
double equality_scale(const QcqpInstance& instance);
VectorXd return_scales(const QcqpInstance& instance);
VectorXd variance_scales(const QcqpInstance& instance);
double negativity_scale(const QcqpInstance& instance);

}  // namespace sysrisk::detail
