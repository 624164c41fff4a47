#pragma once

#include "injflow/measure.hpp"

#include <cstdint>
#include <vector>

namespace injflow::transport {

// Combined support size above which the exact solver refuses to run.
inline constexpr Eigen::Index kExactBudget = 512;

// Minimum-cost perfect matching on a square cost matrix (Hungarian method
// with potentials). Returns assignment[row] = column.
std::vector<Eigen::Index> solve_assignment(const Mat& cost);

// Exact discrete optimal transport cost for arbitrary weights (successive
// shortest paths on the bipartite transport network).
double transport_cost(const Vec& supply, const Vec& demand, const Mat& cost);

Mat squared_distance_matrix(const Mat& a, const Mat& b);

// Exact W2 with squared Euclidean ground cost. Throws budget-exceeded when the
// combined support exceeds kExactBudget; use wasserstein2_sliced instead.
double wasserstein2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Squared W2 between two weighted measures on the line.
double wasserstein2_squared_1d(std::vector<std::pair<double, double>> a, std::vector<std::pair<double, double>> b);

// Root-mean over random unit directions of the squared 1-D W2 of the projections.
double wasserstein2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t n_projections,
                           std::uint64_t seed);
// Same with caller-provided unit directions (columns).
double wasserstein2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const Mat& directions);

// Unit directions drawn from a seeded generator; one per column.
Mat random_directions(Eigen::Index dim, std::size_t count, std::uint64_t seed);

} // namespace injflow::transport
