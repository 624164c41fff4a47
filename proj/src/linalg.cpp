#include "injflow/linalg.hpp"
#include "injflow/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace injflow {

double spectral_norm(const Mat& m)
{
    if (m.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

double smallest_singular_value(const Mat& m)
{
    if (m.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& s = svd.singularValues();
    return s(s.size() - 1);
}

bool all_finite(const Mat& m) noexcept
{
    return m.allFinite();
}

std::vector<double> flatten_row_major(const Mat& m)
{
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out.push_back(m(r, c));
        }
    }
    return out;
}

Mat from_row_major(std::span<const double> values, Eigen::Index rows, Eigen::Index cols)
{
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
        }
    }
    return m;
}

std::uint64_t hash_bytes(std::span<const double> values, std::uint64_t seed) noexcept
{
    std::uint64_t h = seed;
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ull;
        }
    }
    return h;
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    while (u <= 0.0) {
        u = uniform();
    }
    const double v = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u));
    const double angle = 2.0 * std::numbers::pi * v;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Vec Rng::normal_vector(Eigen::Index dim)
{
    Vec v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        v(i) = normal();
    }
    return v;
}

Vec Rng::unit_vector(Eigen::Index dim)
{
    Vec v = normal_vector(dim);
    double n = v.norm();
    while (n < 1e-12) {
        v = normal_vector(dim);
        n = v.norm();
    }
    return v / n;
}

Mat Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols)
{
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            m(r, c) = normal();
        }
    }
    return m;
}

Mat Rng::orthonormal_columns(Eigen::Index rows, Eigen::Index cols)
{
    const Mat g = normal_matrix(rows, cols);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(rows, cols);
    // Fix the sign ambiguity so the result is a deterministic function of g.
    const Mat r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < cols; ++c) {
        if (r(c, c) < 0.0) {
            q.col(c) *= -1.0;
        }
    }
    return q;
}

Mat Rng::well_conditioned(Eigen::Index dim, double lo, double hi)
{
    const Mat u = orthonormal_columns(dim, dim);
    const Mat v = orthonormal_columns(dim, dim);
    Vec s(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        s(i) = uniform(lo, hi);
    }
    return u * s.asDiagonal() * v.transpose();
}

} // namespace injflow
