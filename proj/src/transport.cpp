#include "injflow/transport.hpp"
#include "injflow/error.hpp"
#include "injflow/kernels.hpp"
#include "injflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace injflow::transport {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMassEps = 1e-15;

} // namespace

std::vector<Eigen::Index> solve_assignment(const Mat& cost)
{
    const Eigen::Index n = cost.rows();
    require(cost.cols() == n, ErrorKind::InvalidArgument, "assignment needs a square cost matrix");
    // 1-based potentials formulation; p[j] is the row matched to column j.
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0);
    std::vector<Eigen::Index> way(static_cast<std::size_t>(n + 1), 0);
    for (Eigen::Index i = 1; i <= n; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), kInf);
        std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
            double delta = kInf;
            Eigen::Index j1 = 0;
            for (Eigen::Index j = 1; j <= n; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (used[sj]) {
                    continue;
                }
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
                if (cur < minv[sj]) {
                    minv[sj] = cur;
                    way[sj] = j0;
                }
                if (minv[sj] < delta) {
                    delta = minv[sj];
                    j1 = j;
                }
            }
            for (Eigen::Index j = 0; j <= n; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (used[sj]) {
                    u[static_cast<std::size_t>(p[sj])] += delta;
                    v[sj] -= delta;
                } else {
                    minv[sj] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Eigen::Index> assignment(static_cast<std::size_t>(n), 0);
    for (Eigen::Index j = 1; j <= n; ++j) {
        assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
    return assignment;
}

double transport_cost(const Vec& supply, const Vec& demand, const Mat& cost)
{
    const Eigen::Index ns = supply.size();
    const Eigen::Index nt = demand.size();
    require(cost.rows() == ns && cost.cols() == nt, ErrorKind::InvalidArgument, "transport: cost shape mismatch");
    // Nodes: 0 source, 1..ns supplies, ns+1..ns+nt demands, ns+nt+1 sink.
    const Eigen::Index nodes = ns + nt + 2;
    const Eigen::Index sink = nodes - 1;
    Vec supply_left = supply;
    Vec demand_left = demand;
    Mat flow = Mat::Zero(ns, nt);
    Vec potential = Vec::Zero(nodes);
    Vec dist(nodes);
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(nodes));
    std::vector<char> done(static_cast<std::size_t>(nodes));

    auto relax = [&](Eigen::Index from, Eigen::Index to, double edge_cost) {
        if (done[static_cast<std::size_t>(to)]) {
            return;
        }
        const double cand = dist(from) + edge_cost + potential(from) - potential(to);
        if (cand < dist(to)) {
            dist(to) = cand;
            parent[static_cast<std::size_t>(to)] = from;
        }
    };

    double remaining = supply.sum();
    std::size_t iterations = 0;
    while (remaining > 1e-14) {
        require(++iterations < 100000, ErrorKind::InternalError, "transport solver did not converge");
        dist.setConstant(kInf);
        std::fill(done.begin(), done.end(), 0);
        dist(0) = 0.0;
        for (;;) {
            Eigen::Index u = -1;
            double best = kInf;
            for (Eigen::Index k = 0; k < nodes; ++k) {
                if (!done[static_cast<std::size_t>(k)] && dist(k) < best) {
                    best = dist(k);
                    u = k;
                }
            }
            if (u < 0) {
                break;
            }
            done[static_cast<std::size_t>(u)] = 1;
            if (u == 0) {
                for (Eigen::Index i = 0; i < ns; ++i) {
                    if (supply_left(i) > kMassEps) {
                        relax(0, 1 + i, 0.0);
                    }
                }
            } else if (u <= ns) {
                const Eigen::Index i = u - 1;
                for (Eigen::Index j = 0; j < nt; ++j) {
                    relax(u, 1 + ns + j, cost(i, j));
                }
                if (supply(i) - supply_left(i) > kMassEps) {
                    relax(u, 0, 0.0);
                }
            } else if (u < sink) {
                const Eigen::Index j = u - 1 - ns;
                for (Eigen::Index i = 0; i < ns; ++i) {
                    if (flow(i, j) > kMassEps) {
                        relax(u, 1 + i, -cost(i, j));
                    }
                }
                if (demand_left(j) > kMassEps) {
                    relax(u, sink, 0.0);
                }
            } else {
                for (Eigen::Index j = 0; j < nt; ++j) {
                    if (demand(j) - demand_left(j) > kMassEps) {
                        relax(sink, 1 + ns + j, 0.0);
                    }
                }
            }
        }
        require(std::isfinite(dist(sink)), ErrorKind::InternalError, "transport: no augmenting path");
        for (Eigen::Index k = 0; k < nodes; ++k) {
            potential(k) += std::min(dist(k), dist(sink));
        }
        // Bottleneck along the path.
        double amount = kInf;
        for (Eigen::Index v = sink; v != 0;) {
            const Eigen::Index u = parent[static_cast<std::size_t>(v)];
            if (u == 0) {
                amount = std::min(amount, supply_left(v - 1));
            } else if (v == sink) {
                amount = std::min(amount, demand_left(u - 1 - ns));
            } else if (u > ns && v <= ns) {
                amount = std::min(amount, flow(v - 1, u - 1 - ns));
            }
            v = u;
        }
        for (Eigen::Index v = sink; v != 0;) {
            const Eigen::Index u = parent[static_cast<std::size_t>(v)];
            if (u == 0) {
                supply_left(v - 1) -= amount;
            } else if (v == sink) {
                demand_left(u - 1 - ns) -= amount;
            } else if (u <= ns && v > ns) {
                flow(u - 1, v - 1 - ns) += amount;
            } else {
                flow(v - 1, u - 1 - ns) -= amount;
            }
            v = u;
        }
        remaining -= amount;
    }
    return (flow.array() * cost.array()).sum();
}

Mat squared_distance_matrix(const Mat& a, const Mat& b)
{
    require(a.rows() == b.rows(), ErrorKind::InvalidArgument, "distance matrix: dimension mismatch");
    const kernels::PointBlock block(b);
    Mat out(a.cols(), b.cols());
    std::vector<double> row(static_cast<std::size_t>(b.cols()));
    Vec q(a.rows());
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
        q = a.col(i);
        kernels::squared_distances(block, q.data(), row.data());
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            out(i, j) = row[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

double wasserstein2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu)
{
    validate(mu);
    validate(nu);
    require(mu.dim() == nu.dim(), ErrorKind::InvalidArgument, "wasserstein2_exact: dimension mismatch");
    if (mu.size() + nu.size() > kExactBudget) {
        fail(ErrorKind::BudgetExceeded, "combined support " + std::to_string(mu.size() + nu.size()) +
                                            " exceeds the exact budget of " + std::to_string(kExactBudget) +
                                            "; use wasserstein2_sliced");
    }
    const Mat cost = squared_distance_matrix(mu.points, nu.points);
    double total = 0.0;
    if (mu.size() == nu.size() && mu.is_uniform() && nu.is_uniform()) {
        const auto assignment = solve_assignment(cost);
        for (Eigen::Index i = 0; i < mu.size(); ++i) {
            total += cost(i, assignment[static_cast<std::size_t>(i)]);
        }
        total /= static_cast<double>(mu.size());
    } else {
        total = transport_cost(mu.weights, nu.weights, cost);
    }
    return std::sqrt(std::max(total, 0.0));
}

double wasserstein2_squared_1d(std::vector<std::pair<double, double>> a, std::vector<std::pair<double, double>> b)
{
    require(!a.empty() && !b.empty(), ErrorKind::InvalidArgument, "1-D transport needs non-empty measures");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    // Couple quantiles monotonically.
    std::size_t i = 0;
    std::size_t j = 0;
    double wa = a[0].second;
    double wb = b[0].second;
    double total = 0.0;
    while (i < a.size() && j < b.size()) {
        const double m = std::min(wa, wb);
        const double diff = a[i].first - b[j].first;
        total += m * diff * diff;
        wa -= m;
        wb -= m;
        if (wa <= kMassEps) {
            if (++i < a.size()) {
                wa = a[i].second;
            }
        }
        if (wb <= kMassEps) {
            if (++j < b.size()) {
                wb = b[j].second;
            }
        }
    }
    return total;
}

Mat random_directions(Eigen::Index dim, std::size_t count, std::uint64_t seed)
{
    Rng rng(seed);
    Mat dirs(dim, static_cast<Eigen::Index>(count));
    for (Eigen::Index k = 0; k < dirs.cols(); ++k) {
        dirs.col(k) = rng.unit_vector(dim);
    }
    return dirs;
}

double wasserstein2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const Mat& directions)
{
    validate(mu);
    validate(nu);
    require(mu.dim() == nu.dim() && directions.rows() == mu.dim(), ErrorKind::InvalidArgument,
            "wasserstein2_sliced: dimension mismatch");
    require(directions.cols() >= 1, ErrorKind::InvalidArgument, "wasserstein2_sliced: need at least one projection");
    const kernels::PointBlock a(mu.points);
    const kernels::PointBlock b(nu.points);
    double total = 0.0;
    std::vector<std::pair<double, double>> pa(static_cast<std::size_t>(mu.size()));
    std::vector<std::pair<double, double>> pb(static_cast<std::size_t>(nu.size()));
    for (Eigen::Index k = 0; k < directions.cols(); ++k) {
        const Vec dir = directions.col(k);
        const Vec proj_a = kernels::project(a, dir);
        const Vec proj_b = kernels::project(b, dir);
        for (Eigen::Index i = 0; i < mu.size(); ++i) {
            pa[static_cast<std::size_t>(i)] = {proj_a(i), mu.weights(i)};
        }
        for (Eigen::Index i = 0; i < nu.size(); ++i) {
            pb[static_cast<std::size_t>(i)] = {proj_b(i), nu.weights(i)};
        }
        total += wasserstein2_squared_1d(pa, pb);
    }
    return std::sqrt(total / static_cast<double>(directions.cols()));
}

double wasserstein2_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t n_projections,
                           std::uint64_t seed)
{
    require(n_projections >= 1, ErrorKind::InvalidArgument, "wasserstein2_sliced: need at least one projection");
    return wasserstein2_sliced(mu, nu, random_directions(mu.dim(), n_projections, seed));
}

} // namespace injflow::transport
