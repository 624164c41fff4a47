#pragma once

// Data-parallel inner loops over point sets. Each kernel has a scalar
// reference and vector variants; the variant is picked once at runtime from
// the host CPU (override with INJFLOW_SIMD=scalar|avx2). Variants accumulate
// coordinates in the same order without fused multiply-add, so their results
// are bit-identical to the scalar reference.

#include "injflow/linalg.hpp"

#include <cstddef>
#include <string_view>
#include <vector>

namespace injflow::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

// out[j] = sum_k (soa[k*stride + j] - query[k])^2, j < count
using SquaredDistancesFn = void (*)(const double* soa, std::size_t stride, std::size_t count,
                                    std::size_t dim, const double* query, double* out);
// out[j] = sum_k soa[k*stride + j] * direction[k], j < count
using ProjectFn = void (*)(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
                           const double* direction, double* out);

struct KernelTable {
    Isa isa;
    SquaredDistancesFn squared_distances;
    ProjectFn project;
};

bool isa_available(Isa isa) noexcept;
const KernelTable& table(Isa isa);
const KernelTable& active() noexcept;
// Test hook; throws invalid-argument if the host cannot run `isa`.
void select(Isa isa);

// Structure-of-arrays copy of a d x N point batch.
class PointBlock {
public:
    PointBlock() = default;
    explicit PointBlock(const Mat& points);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return count_; }
    const double* data() const noexcept { return soa_.data(); }
    std::size_t stride() const noexcept { return count_; }

private:
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::vector<double> soa_;
};

struct Nearest {
    std::size_t index = 0;
    double squared_distance = 0.0;
};

// For every column of `queries`, the closest point of `set` (first index wins ties).
std::vector<Nearest> nearest(const PointBlock& set, const Mat& queries, const KernelTable& k = active());

// Squared distances from one query to every point of `set`.
void squared_distances(const PointBlock& set, const double* query, double* out, const KernelTable& k = active());

// <direction, p_j> for every point of `set`.
Vec project(const PointBlock& set, const Vec& direction, const KernelTable& k = active());

namespace scalar {
void squared_distances(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
                       const double* query, double* out);
void project(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
             const double* direction, double* out);
} // namespace scalar

namespace avx2 {
void squared_distances(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
                       const double* query, double* out);
void project(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
             const double* direction, double* out);
} // namespace avx2

} // namespace injflow::kernels
