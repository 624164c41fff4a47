#pragma once

#include "injflow/geometry.hpp"
#include "injflow/network.hpp"

#include <string>
#include <vector>

namespace injflow::projection {

// Two coordinates y_i, y_{i+n} count as tied when they differ by at most
// kTieTolerance * max(1, |y_i|).
inline constexpr double kTieTolerance = 1e-12;

// Sign-pattern selection for R(x) = ReLU([B; -D B] x).
struct ReluProjectionWorkspace {
    Vec c;                          // max([I -I; -I I] y, 0), length 2n
    Eigen::VectorXi delta;          // diagonal of Delta_y, entries in {0, 1}
    Mat selection;                  // M_y = [(I - Delta_y), Delta_y], n x 2n
    std::vector<Eigen::Index> tie_indices;
    std::size_t positive_ties = 0;  // ties with y_i = y_{i+n} > 0

    // Bit pattern of Delta_y, one character per coordinate.
    std::string pattern() const;
};

ReluProjectionWorkspace relu_workspace(const Vec& y);

struct ProjectionResult {
    Vec x;
    Vec y_hat;
    double residual = 0.0;
    bool tie_flag = false;
    // Number of least-squares minimizers; 1 unless ties with positive value occur.
    std::size_t minimizer_count = 1;
};

// Least-squares preimage under ReLU([B; -D B] x), d = diag(D) > 0:
// x = (M_y W)^{-1} M_y max(y, 0), with M_y from y. On the ReLU range (y >= 0)
// this is exactly (M_y W)^{-1} M_y y; the clamp makes it the minimizer for
// arbitrary y (a pair with y_i, y_{i+n} <= 0 is best served by (Bx)_i = 0).
ProjectionResult relu_pseudo_inverse(const Mat& b, const Vec& d, const Vec& y);

// x = (W^T W)^{-1} W^T y via the normal equations. Throws invalid-layer on rank deficiency.
ProjectionResult linear_pseudo_inverse(const Mat& w, const Vec& y);

// Pre-image for one expansive layer (zero-pad, linear, or bias-shifted
// injective ReLU with m = 2n). Throws unsupported-layer otherwise.
ProjectionResult expansive_pseudo_inverse(const ExpansiveLayer& layer, const Vec& y);
bool supports_projection(const ExpansiveLayer& layer) noexcept;

// Inverts stages back to front: flow blocks exactly, expansive layers via
// their pseudo-inverse. Idempotent, not an orthogonal projection.
ProjectionResult project_to_range(const InjectiveNetwork& net, const Vec& y);

// Delta_y bit pattern for every grid point (points of R^{2n}).
std::vector<std::string> map_projection_regions(const Mat& b, const Vec& d, const geometry::CompactSampleSet& grid);

} // namespace injflow::projection
