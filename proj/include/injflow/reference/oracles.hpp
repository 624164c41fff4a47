#pragma once

// Brute-force reference solvers. They share no code with the solvers they
// check and are only meant for small instances.

#include "injflow/parameter.hpp"

#include <functional>
#include <vector>

namespace injflow::reference {

struct ReluLeastSquares {
    double min_residual = 0.0;  // min over x of |y - ReLU(W x)|
    std::vector<Vec> minimizers;
};

// W = [B; -diag(d) B]. Enumerates every sign pattern of Bx and every set of
// tight constraints (Bx)_i = 0 inside that cone, solving each equality
// constrained least-squares problem and keeping the feasible optima.
ReluLeastSquares relu_least_squares(const Mat& b, const Vec& d, const Vec& y);

// Minimum over all permutations of the mean squared-distance coupling cost
// between two equal-size uniform point sets (columns); returns sqrt of it.
double wasserstein2_by_permutations(const Mat& a, const Mat& b);

// Central differences of `loss` with respect to every entry of `params`.
std::vector<Mat> finite_difference_gradient(const std::function<double()>& loss, const ParamList& params,
                                            double step = 1e-5);

} // namespace injflow::reference
