#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>

namespace injflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Batches are stored one point per column: a d x N matrix holds N points of R^d.

double spectral_norm(const Mat& m);
double smallest_singular_value(const Mat& m);

bool all_finite(const Mat& m) noexcept;

// Row-major flattening used by every serializer.
std::vector<double> flatten_row_major(const Mat& m);
Mat from_row_major(std::span<const double> values, Eigen::Index rows, Eigen::Index cols);

// FNV-1a over the raw bytes of the values; used to prove parameters are untouched.
std::uint64_t hash_bytes(std::span<const double> values, std::uint64_t seed = 1469598103934665603ull) noexcept;

} // namespace injflow
