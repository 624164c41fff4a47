#include "injflow/kernels.hpp"
#include "injflow/error.hpp"

#include <cstdlib>
#include <limits>
#include <string>

namespace injflow::kernels {

std::string_view to_string(Isa isa) noexcept
{
    switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

bool isa_available(Isa isa) noexcept
{
    switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
        return __builtin_cpu_supports("avx2");
#else
        return false;
#endif
    }
    return false;
}

namespace {

constexpr KernelTable kScalar{Isa::Scalar, &scalar::squared_distances, &scalar::project};
constexpr KernelTable kAvx2{Isa::Avx2, &avx2::squared_distances, &avx2::project};

const KernelTable* detect() noexcept
{
    if (const char* env = std::getenv("INJFLOW_SIMD")) {
        const std::string choice(env);
        if (choice == "scalar") {
            return &kScalar;
        }
        if (choice == "avx2" && isa_available(Isa::Avx2)) {
            return &kAvx2;
        }
    }
    return isa_available(Isa::Avx2) ? &kAvx2 : &kScalar;
}

const KernelTable*& current() noexcept
{
    static const KernelTable* selected = detect();
    return selected;
}

} // namespace

const KernelTable& table(Isa isa)
{
    require(isa_available(isa), ErrorKind::InvalidArgument,
            "instruction set " + std::string(to_string(isa)) + " is not available on this host");
    return isa == Isa::Avx2 ? kAvx2 : kScalar;
}

const KernelTable& active() noexcept
{
    return *current();
}

void select(Isa isa)
{
    current() = &table(isa);
}

PointBlock::PointBlock(const Mat& points)
    : dim_(static_cast<std::size_t>(points.rows())), count_(static_cast<std::size_t>(points.cols())),
      soa_(dim_ * count_)
{
    // Column-major d x N transposed into one contiguous row per coordinate.
    for (std::size_t j = 0; j < count_; ++j) {
        for (std::size_t k = 0; k < dim_; ++k) {
            soa_[k * count_ + j] = points(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        }
    }
}

void squared_distances(const PointBlock& set, const double* query, double* out, const KernelTable& k)
{
    k.squared_distances(set.data(), set.stride(), set.size(), set.dim(), query, out);
}

std::vector<Nearest> nearest(const PointBlock& set, const Mat& queries, const KernelTable& k)
{
    require(set.size() > 0, ErrorKind::InvalidArgument, "nearest: empty point set");
    require(static_cast<std::size_t>(queries.rows()) == set.dim(), ErrorKind::InvalidArgument,
            "nearest: dimension mismatch");
    std::vector<Nearest> result(static_cast<std::size_t>(queries.cols()));
    std::vector<double> buffer(set.size());
    Vec query(queries.rows());
    for (Eigen::Index q = 0; q < queries.cols(); ++q) {
        query = queries.col(q);
        k.squared_distances(set.data(), set.stride(), set.size(), set.dim(), query.data(), buffer.data());
        Nearest best{0, std::numeric_limits<double>::infinity()};
        for (std::size_t j = 0; j < buffer.size(); ++j) {
            if (buffer[j] < best.squared_distance) {
                best = {j, buffer[j]};
            }
        }
        result[static_cast<std::size_t>(q)] = best;
    }
    return result;
}

Vec project(const PointBlock& set, const Vec& direction, const KernelTable& k)
{
    require(static_cast<std::size_t>(direction.size()) == set.dim(), ErrorKind::InvalidArgument,
            "project: dimension mismatch");
    Vec out(static_cast<Eigen::Index>(set.size()));
    k.project(set.data(), set.stride(), set.size(), set.dim(), direction.data(), out.data());
    return out;
}

} // namespace injflow::kernels
