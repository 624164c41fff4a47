#pragma once

#include "injflow/linalg.hpp"

namespace injflow {

// Weighted point cloud; points are the columns of a d x N matrix.
struct EmpiricalMeasure {
    Mat points;
    Vec weights;

    Eigen::Index dim() const noexcept { return points.rows(); }
    Eigen::Index size() const noexcept { return points.cols(); }
    bool is_uniform() const noexcept;
};

// Uniform weights 1/N. Throws invalid-argument on an empty set.
EmpiricalMeasure uniform_measure(Mat points);

// Throws invalid-argument unless |points| = |weights|, weights >= 0 and sum to 1 (+-1e-12).
void validate(const EmpiricalMeasure& measure);

} // namespace injflow
