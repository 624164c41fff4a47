#include "injflow/error.hpp"
#include "injflow/projection.hpp"
#include "injflow/reference/oracles.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace injflow;

namespace {

Vec vec(std::initializer_list<double> v)
{
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out(i++) = x;
    }
    return out;
}

Vec relu_apply(const Mat& b, const Vec& d, const Vec& x)
{
    const Vec z = b * x;
    Vec out(2 * z.size());
    out.head(z.size()) = z.cwiseMax(0.0);
    out.tail(z.size()) = (-(d.asDiagonal() * z)).cwiseMax(0.0);
    return out;
}

Vec random_positive(Eigen::Index n, Rng& rng)
{
    Vec d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i) = rng.uniform(0.5, 2.0);
    }
    return d;
}

bool has_tie(const Vec& y)
{
    const Eigen::Index n = y.size() / 2;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(y(i) - y(i + n)) <= 1e-6) {
            return true;
        }
    }
    return false;
}

} // namespace

TEST_CASE("relu pseudo-inverse examples")
{
    const Mat b = Mat::Ones(1, 1);
    const Vec d = Vec::Ones(1);
    auto r = projection::relu_pseudo_inverse(b, d, vec({2, 0.5}));
    CHECK(r.x(0) == 2.0);
    CHECK(r.residual == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_FALSE(r.tie_flag);
    r = projection::relu_pseudo_inverse(b, d, vec({0.5, 2}));
    CHECK(r.x(0) == -2.0);
    CHECK(r.residual == doctest::Approx(0.5).epsilon(1e-15));
    r = projection::relu_pseudo_inverse(b, d, vec({1, 1}));
    CHECK(std::abs(r.x(0)) == 1.0);
    CHECK(r.tie_flag);
    CHECK(r.minimizer_count == 2);
    CHECK(r.residual == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((vec({1, 1}) - relu_apply(b, d, vec({-r.x(0)}))).norm() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("linear pseudo-inverse examples")
{
    auto r = projection::linear_pseudo_inverse(ExpansiveLayer::zero_pad(1, 2).linear_weight(), vec({3, 4}));
    CHECK(r.x(0) == 3.0);
    CHECK(r.residual == 4.0);
    r = projection::linear_pseudo_inverse(Mat::Ones(2, 1), vec({1, 3}));
    CHECK(r.x(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.residual == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    double best = 1e300;
    double best_x = 0.0;
    for (int k = -4000; k <= 4000; ++k) {
        const double x = k * 1e-3;
        const double res = std::hypot(1 - x, 3 - x);
        if (res < best) {
            best = res;
            best_x = x;
        }
    }
    CHECK(best_x == doctest::Approx(r.x(0)).epsilon(1e-12));
    Mat w(2, 1);
    w << 1, 0;
    r = projection::linear_pseudo_inverse(w, vec({5, 0}));
    CHECK(r.x(0) == 5.0);
    CHECK(r.residual == 0.0);
    CHECK_THROWS_AS(projection::linear_pseudo_inverse(Mat::Zero(2, 1), vec({1, 1})), Error);
}

TEST_CASE("linear residual is orthogonal to the range")
{
    Rng rng(1);
    for (int k = 0; k < 50; ++k) {
        const Mat w = rng.normal_matrix(5, 3);
        const Vec y = rng.normal_vector(5);
        const auto r = projection::linear_pseudo_inverse(w, y);
        CHECK((w.transpose() * (y - r.y_hat)).norm() <= 1e-10);
    }
}

TEST_CASE("relu pseudo-inverse attains the brute-force optimum")
{
    Rng rng(2);
    const Eigen::Index sizes[] = {1, 2, 3, 5};
    int checked = 0;
    while (checked < 500) {
        const Eigen::Index n = sizes[checked % 4];
        const Mat b = rng.well_conditioned(n);
        const Vec d = random_positive(n, rng);
        const Vec y = rng.normal_vector(2 * n);
        if (has_tie(y)) {
            continue;
        }
        const auto oracle = reference::relu_least_squares(b, d, y);
        const auto r = projection::relu_pseudo_inverse(b, d, y);
        CHECK_FALSE(r.tie_flag);
        CHECK((y - relu_apply(b, d, r.x)).norm() <= oracle.min_residual + 1e-6);
        for (const auto& x_star : oracle.minimizers) {
            CHECK((x_star - r.x).norm() <= 1e-6);
        }
        ++checked;
    }
}

TEST_CASE("a single positive tie has exactly two minimizers")
{
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = 1 + trial % 3;
        const Mat b = rng.well_conditioned(n);
        const Vec d = random_positive(n, rng);
        Vec y = rng.normal_vector(2 * n);
        for (Eigen::Index i = 1; i < n; ++i) {
            if (std::abs(y(i) - y(i + n)) < 1e-3) {
                y(i) += 0.5;
            }
        }
        y(0) = rng.uniform(0.2, 2.0);
        y(n) = y(0);
        const auto oracle = reference::relu_least_squares(b, d, y);
        const auto r = projection::relu_pseudo_inverse(b, d, y);
        CHECK(r.tie_flag);
        CHECK(r.minimizer_count == 2);
        REQUIRE(oracle.minimizers.size() == 2);
        const double gap = std::min((oracle.minimizers[0] - r.x).norm(), (oracle.minimizers[1] - r.x).norm());
        CHECK(gap <= 1e-6);
    }
}

TEST_CASE("selection matrix workspace")
{
    Rng rng(4);
    for (int k = 0; k < 100; ++k) {
        const Vec y = rng.normal_vector(6);
        const auto ws = projection::relu_workspace(y);
        CHECK((ws.c.array() >= 0.0).all());
        CHECK(ws.selection.rows() == 3);
        CHECK(ws.selection.cols() == 6);
        for (Eigen::Index i = 0; i < 3; ++i) {
            CHECK((ws.delta(i) == 0 || ws.delta(i) == 1));
            CHECK(ws.selection.row(i).sum() == 1.0);
            CHECK(ws.selection.row(i).cwiseAbs().maxCoeff() == 1.0);
        }
    }
}

TEST_CASE("selected system is never singular")
{
    Rng rng(5);
    for (int k = 0; k < 200; ++k) {
        const Eigen::Index n = 1 + k % 5;
        const Mat b = rng.well_conditioned(n);
        const Vec d = random_positive(n, rng);
        const auto ws = projection::relu_workspace(rng.normal_vector(2 * n));
        Mat w(2 * n, n);
        w.topRows(n) = b;
        w.bottomRows(n) = -(d.asDiagonal() * b);
        const Eigen::JacobiSVD<Mat> svd(ws.selection * w);
        const Vec s = svd.singularValues();
        CHECK(s(s.size() - 1) > kRankTolerance * s(0));
    }
}

TEST_CASE("projection examples through networks")
{
    std::vector<ExpansiveLayer> exp;
    exp.push_back(ExpansiveLayer::zero_pad(1, 2));
    std::vector<FlowBlock> flows;
    flows.emplace_back(2);
    const InjectiveNetwork pad(FlowBlock(1), std::move(exp), std::move(flows));
    const auto r = projection::project_to_range(pad, vec({3, 4}));
    CHECK(r.y_hat == vec({3, 0}));
    CHECK(r.residual == 4.0);

    Rng rng(6);
    for (int k = 0; k < 20; ++k) {
        const auto net = testing::random_supported_network(rng);
        const Vec x0 = rng.normal_vector(net.in_dim());
        const auto in_range = projection::project_to_range(net, net.forward(x0));
        CHECK((in_range.x - x0).norm() <= 1e-8);
        CHECK(in_range.residual <= 1e-8);
    }
}

TEST_CASE("network projection is idempotent")
{
    Rng rng(7);
    for (int k = 0; k < 20; ++k) {
        const auto net = testing::random_supported_network(rng);
        for (int q = 0; q < 100; ++q) {
            const Vec y = rng.normal_vector(net.out_dim()) * 2.0;
            const auto first = projection::project_to_range(net, y);
            CHECK((net.forward(first.x) - first.y_hat).norm() <= 1e-10);
            const auto second = projection::project_to_range(net, first.y_hat);
            CHECK((second.y_hat - first.y_hat).norm() <= 1e-8);
        }
    }
}

TEST_CASE("unsupported layers are rejected")
{
    Rng rng(8);
    const auto wide = testing::random_network(rng, ExpansiveKind::InjectiveRelu);
    const auto deep = testing::random_network(rng, ExpansiveKind::InjectiveReluNetwork);
    for (const auto* net : {&wide, &deep}) {
        try {
            projection::project_to_range(*net, Vec::Zero(net->out_dim()));
            FAIL("expected unsupported layer");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::UnsupportedLayer);
        }
    }
    CHECK_FALSE(projection::supports_projection(ExpansiveLayer::random_injective_relu_network(2, 2, rng)));
    CHECK(projection::supports_projection(ExpansiveLayer::random_injective_relu(2, 4, rng)));
}

TEST_CASE("projection region labels")
{
    const Mat b = Mat::Ones(1, 1);
    const Vec d = Vec::Ones(1);
    auto two = geometry::make_sample_set(Mat(vec({2, 0.5})), "point");
    CHECK(projection::map_projection_regions(b, d, two).front() == "0");
    two = geometry::make_sample_set(Mat(vec({0.5, 2})), "point");
    CHECK(projection::map_projection_regions(b, d, two).front() == "1");
    CHECK(projection::relu_workspace(vec({1, 1})).tie_indices.size() == 1);

    const auto grid = geometry::sample_box_grid(vec({-2, -2}), vec({2, 2}), 100);
    const auto labels = projection::map_projection_regions(b, d, grid);
    REQUIRE(labels.size() == 10000);
    for (Eigen::Index k = 0; k < grid.size(); ++k) {
        const bool above = grid.points(1, k) > grid.points(0, k);
        CHECK(labels[static_cast<std::size_t>(k)] == (above ? "1" : "0"));
    }
}
