#pragma once

#include "injflow/linalg.hpp"

#include <cstdint>
#include <random>

namespace injflow {

// Seeded generator whose derived draws do not depend on the standard
// library's distribution implementations, so sample files are reproducible
// across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t bound) { return engine_() % bound; }

    double normal();

    Vec normal_vector(Eigen::Index dim);
    Vec unit_vector(Eigen::Index dim);
    Mat normal_matrix(Eigen::Index rows, Eigen::Index cols);

    // Matrix with orthonormal columns (rows >= cols), from QR of a Gaussian matrix.
    Mat orthonormal_columns(Eigen::Index rows, Eigen::Index cols);

    // Square matrix U diag(s) V^T with singular values drawn in [lo, hi].
    Mat well_conditioned(Eigen::Index dim, double lo = 0.5, double hi = 2.0);

    std::uint64_t fork_seed() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace injflow
