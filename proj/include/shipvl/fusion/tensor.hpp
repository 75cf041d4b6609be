#pragma once

#include <Eigen/Core>

namespace shipvl::fusion {

// Token matrices are (count x dim), one token per row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace shipvl::fusion
