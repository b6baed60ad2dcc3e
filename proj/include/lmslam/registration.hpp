#pragma once

#include <vector>

#include "lmslam/geometry.hpp"

namespace lmslam {

/// Closed-form least-squares rigid transform T with q_i ~= T(p_i):
/// centroid subtraction + SVD of the cross-covariance, with determinant
/// correction against reflections. Throws DegenerateConfiguration for
/// fewer than 3 points or a collinear source set.
Pose estimate_rigid_transform(const std::vector<Point3>& p,
                              const std::vector<Point3>& q);

}  // namespace lmslam
