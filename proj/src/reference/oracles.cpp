#include "injflow/reference/oracles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace injflow::reference {

namespace {

double relu_objective(const Mat& w, const Vec& x, const Vec& y)
{
    return (y - (w * x).cwiseMax(0.0)).squaredNorm();
}

// Orthonormal basis of {x : A x = 0}.
Mat nullspace(const Mat& a, Eigen::Index dim)
{
    if (a.rows() == 0) {
        return Mat::Identity(dim, dim);
    }
    Eigen::FullPivLU<Mat> lu(a);
    lu.setThreshold(1e-12);
    Mat k = lu.kernel();
    if (lu.rank() == dim) {
        return Mat(dim, 0);
    }
    return Eigen::HouseholderQR<Mat>(k).householderQ() * Mat::Identity(dim, k.cols());
}

} // namespace

ReluLeastSquares relu_least_squares(const Mat& b, const Vec& d, const Vec& y)
{
    const Eigen::Index n = b.rows();
    Mat w(2 * n, n);
    w.topRows(n) = b;
    w.bottomRows(n) = -(d.asDiagonal() * b);

    std::vector<std::pair<double, Vec>> candidates;
    for (unsigned sign = 0; sign < (1u << n); ++sign) {
        for (unsigned tight = 0; tight < (1u << n); ++tight) {
            std::vector<Eigen::Index> active_rows;
            std::vector<Eigen::Index> tight_rows;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (tight & (1u << i)) {
                    tight_rows.push_back(i);
                } else {
                    active_rows.push_back((sign & (1u << i)) ? i : i + n);
                }
            }
            Mat eq(static_cast<Eigen::Index>(tight_rows.size()), n);
            for (std::size_t k = 0; k < tight_rows.size(); ++k) {
                eq.row(static_cast<Eigen::Index>(k)) = b.row(tight_rows[k]);
            }
            const Mat basis = nullspace(eq, n);
            Vec x = Vec::Zero(n);
            if (basis.cols() > 0 && !active_rows.empty()) {
                Mat a(static_cast<Eigen::Index>(active_rows.size()), n);
                Vec rhs(a.rows());
                for (std::size_t k = 0; k < active_rows.size(); ++k) {
                    a.row(static_cast<Eigen::Index>(k)) = w.row(active_rows[k]);
                    rhs(static_cast<Eigen::Index>(k)) = y(active_rows[k]);
                }
                const Vec z = (a * basis).completeOrthogonalDecomposition().solve(rhs);
                x = basis * z;
            }
            const Vec u = b * x;
            bool feasible = true;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double signed_u = (sign & (1u << i)) ? u(i) : -u(i);
                feasible = feasible && signed_u >= -1e-10 * std::max(1.0, x.norm());
            }
            if (feasible) {
                candidates.emplace_back(relu_objective(w, x, y), x);
            }
        }
    }

    ReluLeastSquares out;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        best = std::min(best, c.first);
    }
    out.min_residual = std::sqrt(best);
    const double slack = 1e-9 * std::max(1.0, best);
    for (const auto& c : candidates) {
        if (c.first > best + slack) {
            continue;
        }
        const bool seen = std::any_of(out.minimizers.begin(), out.minimizers.end(),
                                      [&](const Vec& m) { return (m - c.second).norm() <= 1e-7 * std::max(1.0, m.norm()); });
        if (!seen) {
            out.minimizers.push_back(c.second);
        }
    }
    return out;
}

double wasserstein2_by_permutations(const Mat& a, const Mat& b)
{
    const auto n = static_cast<std::size_t>(a.cols());
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cost += (a.col(static_cast<Eigen::Index>(i)) - b.col(perm[i])).squaredNorm();
        }
        best = std::min(best, cost / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best);
}

std::vector<Mat> finite_difference_gradient(const std::function<double()>& loss, const ParamList& params, double step)
{
    std::vector<Mat> grads;
    for (const auto& ref : params) {
        Mat& value = ref.param->value;
        Mat g(value.rows(), value.cols());
        for (Eigen::Index k = 0; k < value.size(); ++k) {
            const double orig = value.data()[k];
            value.data()[k] = orig + step;
            const double up = loss();
            value.data()[k] = orig - step;
            const double down = loss();
            value.data()[k] = orig;
            g.data()[k] = (up - down) / (2.0 * step);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace injflow::reference
