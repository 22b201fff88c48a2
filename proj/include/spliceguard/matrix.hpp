#pragma once

#include <Eigen/Core>

namespace spliceguard {

/// Frame-major matrix: one row per frame, one column per feature/channel.
template <class S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace spliceguard
