#include "injflow/geometry.hpp"
#include "injflow/error.hpp"
#include "injflow/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace injflow::geometry {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

} // namespace

CompactSampleSet make_sample_set(Mat points, std::string generator)
{
    require(points.cols() > 0 && points.rows() > 0, ErrorKind::InvalidArgument, "sample set is empty");
    require(points.allFinite(), ErrorKind::InvalidArgument, "sample set has non-finite points");
    return CompactSampleSet{std::move(points), std::move(generator)};
}

CompactSampleSet sample_circle(std::size_t count, std::uint64_t seed, Sampling mode)
{
    require(count >= 1, ErrorKind::InvalidArgument, "sample_circle: count must be positive");
    Mat pts(2, static_cast<Eigen::Index>(count));
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        const double theta = mode == Sampling::Grid
                                 ? kTwoPi * static_cast<double>(k) / static_cast<double>(count)
                                 : rng.uniform(0.0, kTwoPi);
        pts(0, static_cast<Eigen::Index>(k)) = std::cos(theta);
        pts(1, static_cast<Eigen::Index>(k)) = std::sin(theta);
    }
    // Exact values at the quarter turns keep the grid symmetric.
    if (mode == Sampling::Grid && count % 4 == 0) {
        const auto q = static_cast<Eigen::Index>(count / 4);
        pts.col(0) << 1.0, 0.0;
        pts.col(q) << 0.0, 1.0;
        pts.col(2 * q) << -1.0, 0.0;
        pts.col(3 * q) << 0.0, -1.0;
    }
    const std::string gen = mode == Sampling::Grid ? "circle-grid" : "circle-random seed=" + std::to_string(seed);
    return make_sample_set(std::move(pts), gen);
}

CompactSampleSet sample_interval(std::size_t count, double lo, double hi, std::uint64_t seed, Sampling mode)
{
    require(count >= 1, ErrorKind::InvalidArgument, "sample_interval: count must be positive");
    require(lo < hi, ErrorKind::InvalidArgument, "sample_interval: empty interval");
    Mat pts(1, static_cast<Eigen::Index>(count));
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        pts(0, static_cast<Eigen::Index>(k)) =
            mode == Sampling::Grid ? lo + (hi - lo) * (static_cast<double>(k) + 0.5) / static_cast<double>(count)
                                   : rng.uniform(lo, hi);
    }
    return make_sample_set(std::move(pts), mode == Sampling::Grid ? "interval-grid"
                                                                   : "interval-random seed=" + std::to_string(seed));
}

CompactSampleSet sample_annulus(std::size_t count, std::uint64_t seed, Sampling mode, double inner, double outer)
{
    require(count >= 1, ErrorKind::InvalidArgument, "sample_annulus: count must be positive");
    require(0.0 <= inner && inner < outer, ErrorKind::InvalidArgument, "sample_annulus: bad radii");
    Mat pts(2, static_cast<Eigen::Index>(count));
    Rng rng(seed);
    if (mode == Sampling::Random) {
        for (std::size_t k = 0; k < count; ++k) {
            // Inverse-CDF in r^2 gives the area-uniform law.
            const double u = rng.uniform();
            const double r = std::sqrt(inner * inner + u * (outer * outer - inner * inner));
            const double theta = rng.uniform(0.0, kTwoPi);
            pts.col(static_cast<Eigen::Index>(k)) << r * std::cos(theta), r * std::sin(theta);
        }
        return make_sample_set(std::move(pts), "annulus-random seed=" + std::to_string(seed));
    }
    // Polar grid: rings area-uniform in r^2, angles uniform.
    const auto rings = static_cast<std::size_t>(std::max(1.0, std::floor(std::sqrt(static_cast<double>(count) / 8.0))));
    std::size_t k = 0;
    for (std::size_t ring = 0; ring < rings; ++ring) {
        const std::size_t per_ring = count / rings + (ring < count % rings ? 1 : 0);
        const double u = (static_cast<double>(ring) + 0.5) / static_cast<double>(rings);
        const double r = std::sqrt(inner * inner + u * (outer * outer - inner * inner));
        for (std::size_t a = 0; a < per_ring; ++a, ++k) {
            const double theta = kTwoPi * static_cast<double>(a) / static_cast<double>(per_ring);
            pts.col(static_cast<Eigen::Index>(k)) << r * std::cos(theta), r * std::sin(theta);
        }
    }
    return make_sample_set(std::move(pts), "annulus-grid");
}

CompactSampleSet sample_box_grid(const Vec& lo, const Vec& hi, std::size_t per_axis)
{
    require(lo.size() == hi.size() && lo.size() > 0, ErrorKind::InvalidArgument, "sample_box_grid: bad bounds");
    require(per_axis >= 1, ErrorKind::InvalidArgument, "sample_box_grid: per_axis must be positive");
    const auto dim = lo.size();
    std::size_t total = 1;
    for (Eigen::Index d = 0; d < dim; ++d) {
        total *= per_axis;
    }
    Mat pts(dim, static_cast<Eigen::Index>(total));
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rest = k;
        // First coordinate varies slowest.
        for (Eigen::Index d = dim - 1; d >= 0; --d) {
            const std::size_t idx = rest % per_axis;
            rest /= per_axis;
            const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx) / static_cast<double>(per_axis - 1);
            pts(d, static_cast<Eigen::Index>(k)) = lo(d) + t * (hi(d) - lo(d));
        }
    }
    return make_sample_set(std::move(pts), "box-grid");
}

CompactSampleSet sample_box_random(const Vec& lo, const Vec& hi, std::size_t count, std::uint64_t seed)
{
    require(lo.size() == hi.size() && lo.size() > 0, ErrorKind::InvalidArgument, "sample_box_random: bad bounds");
    require(count >= 1, ErrorKind::InvalidArgument, "sample_box_random: count must be positive");
    Rng rng(seed);
    Mat pts(lo.size(), static_cast<Eigen::Index>(count));
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
        for (Eigen::Index d = 0; d < lo.size(); ++d) {
            pts(d, k) = rng.uniform(lo(d), hi(d));
        }
    }
    return make_sample_set(std::move(pts), "box-random seed=" + std::to_string(seed));
}

Vec3 trefoil(double theta)
{
    return {std::sin(theta) + 2.0 * std::sin(2.0 * theta), std::cos(theta) - 2.0 * std::cos(2.0 * theta),
            -std::sin(3.0 * theta)};
}

Vec3 trefoil_derivative(double theta)
{
    return {std::cos(theta) + 4.0 * std::cos(2.0 * theta), -std::sin(theta) + 4.0 * std::sin(2.0 * theta),
            -3.0 * std::cos(3.0 * theta)};
}

Vec3 trefoil_second_derivative(double theta)
{
    return {-std::sin(theta) - 8.0 * std::sin(2.0 * theta), -std::cos(theta) + 8.0 * std::cos(2.0 * theta),
            9.0 * std::sin(3.0 * theta)};
}

Vec3 trefoil_normal(double theta)
{
    const Vec3 tangent = trefoil_derivative(theta).normalized();
    const Vec3 accel = trefoil_second_derivative(theta);
    Vec3 normal = accel - accel.dot(tangent) * tangent;
    if (normal.norm() < 1e-8) {
        const Vec3 reference(0.0, 0.0, 1.0);
        normal = reference - reference.dot(tangent) * tangent;
    }
    return normal.normalized();
}

Vec3 knotted_ribbon(double r, double theta, double a)
{
    require(r >= 0.5 && r <= 1.5, ErrorKind::InvalidArgument, "knotted_ribbon: r must lie in [1/2, 3/2]");
    require(a > 0.0, ErrorKind::InvalidArgument, "knotted_ribbon: half-width must be positive");
    return trefoil(theta) + a * (r - 1.0) * trefoil_normal(theta);
}

Mat ManifoldTarget::apply(const Mat& params) const
{
    require(params.rows() == intrinsic_dim, ErrorKind::InvalidArgument,
            name + ": parameter dimension " + std::to_string(params.rows()) + " != " + std::to_string(intrinsic_dim));
    Mat out(ambient_dim, params.cols());
    for (Eigen::Index j = 0; j < params.cols(); ++j) {
        out.col(j) = map(params.col(j));
    }
    return out;
}

ManifoldTarget planar_circle_target(double radius, double tilt)
{
    const Vec3 u(1.0, 0.0, 0.0);
    const Vec3 v(0.0, std::cos(tilt), std::sin(tilt));
    return ManifoldTarget{"planar-circle", 2, 3, DomainKind::Circle, true, [=](const Vec& x) -> Vec {
                              const double theta = std::atan2(x(1), x(0));
                              return radius * (std::cos(theta) * u + std::sin(theta) * v);
                          }};
}

ManifoldTarget trefoil_target(double scale)
{
    return ManifoldTarget{"trefoil", 2, 3, DomainKind::Circle, true, [=](const Vec& x) -> Vec {
                              return scale * trefoil(std::atan2(x(1), x(0)));
                          }};
}

ManifoldTarget ribbon_target(double half_width)
{
    return ManifoldTarget{"knotted-ribbon", 2, 3, DomainKind::Annulus, false, [=](const Vec& x) -> Vec {
                              return knotted_ribbon(x.norm(), std::atan2(x(1), x(0)), half_width);
                          }};
}

ManifoldTarget toy_curve_target()
{
    return ManifoldTarget{"toy-curve", 1, 3, DomainKind::Interval, false, [](const Vec& x) -> Vec {
                              const double t = x(0);
                              Vec3 p(0.5 * t, 0.25 * std::sin(std::numbers::pi * t),
                                     0.15 * std::cos(std::numbers::pi * t));
                              return p;
                          }};
}

CompactSampleSet sample_domain(const ManifoldTarget& target, std::size_t count, std::uint64_t seed, Sampling mode)
{
    switch (target.domain) {
    case DomainKind::Interval:
        return sample_interval(count, -1.0, 1.0, seed, mode);
    case DomainKind::Circle:
        return sample_circle(count, seed, mode);
    case DomainKind::Annulus:
        return sample_annulus(count, seed, mode);
    case DomainKind::Box:
        break;
    }
    fail(ErrorKind::InvalidArgument, "sample_domain: target '" + target.name + "' has no built-in domain sampler");
}

EmpiricalMeasure pushforward_samples(const ManifoldTarget& target, const CompactSampleSet& base)
{
    require(base.size() > 0, ErrorKind::InvalidArgument, "pushforward_samples: empty base");
    require(base.dim() == target.intrinsic_dim, ErrorKind::InvalidArgument,
            "pushforward_samples: base dimension does not match the target");
    return uniform_measure(target.apply(base.points));
}

std::string format_double(double value)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_csv(std::ostream& out, const Mat& points, const std::string& prefix)
{
    for (Eigen::Index d = 0; d < points.rows(); ++d) {
        out << (d ? "," : "") << prefix << d;
    }
    out << '\n';
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        for (Eigen::Index d = 0; d < points.rows(); ++d) {
            out << (d ? "," : "") << format_double(points(d, j));
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const Mat& points, const std::string& prefix)
{
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write " + path);
    write_csv(out, points, prefix);
}

Mat read_csv(std::istream& in)
{
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::InvalidArgument, "csv: missing header");
    std::size_t columns = 1;
    for (char c : line) {
        columns += c == ',' ? 1 : 0;
    }
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        std::stringstream row(line);
        std::string cell;
        std::size_t count = 0;
        while (std::getline(row, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidArgument, "csv: bad number '" + cell + "' on data row " + std::to_string(rows + 1));
            }
            ++count;
        }
        require(count == columns, ErrorKind::InvalidArgument,
                "csv: row " + std::to_string(rows + 1) + " has " + std::to_string(count) + " columns, expected " +
                    std::to_string(columns));
        ++rows;
    }
    require(rows > 0, ErrorKind::InvalidArgument, "csv: no data rows");
    Mat points(static_cast<Eigen::Index>(columns), static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns; ++c) {
            points(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = values[r * columns + c];
        }
    }
    return points;
}

Mat read_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::InvalidArgument, "cannot read " + path);
    return read_csv(in);
}

} // namespace injflow::geometry
