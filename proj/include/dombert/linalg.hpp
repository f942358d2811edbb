#pragma once

#include <Eigen/Dense>

namespace dombert {

// Row-major so that one token position (or one domain) is a contiguous row.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

}  // namespace dombert
