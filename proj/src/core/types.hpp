#pragma once

#include <Eigen/Dense>

namespace eqcausal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace eqcausal
