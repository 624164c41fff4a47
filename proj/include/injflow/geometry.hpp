#pragma once

#include "injflow/linalg.hpp"
#include "injflow/measure.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>

namespace injflow::geometry {

using Vec3 = Eigen::Vector3d;

enum class Sampling { Grid, Random };

// Finite sample of a compact set K (or W); one point per column.
struct CompactSampleSet {
    Mat points;
    std::string generator;

    Eigen::Index dim() const noexcept { return points.rows(); }
    Eigen::Index size() const noexcept { return points.cols(); }
};

// Validates non-emptiness and finiteness.
CompactSampleSet make_sample_set(Mat points, std::string generator);

// Unit circle in R^2. Grid points sit at angles 2*pi*k/count starting at (1, 0).
CompactSampleSet sample_circle(std::size_t count, std::uint64_t seed, Sampling mode = Sampling::Grid);
// Interval [lo, hi]; grid uses cell midpoints so it discretizes the uniform law.
CompactSampleSet sample_interval(std::size_t count, double lo, double hi, std::uint64_t seed,
                                 Sampling mode = Sampling::Grid);
// Annulus inner <= |x| <= outer, uniform by area.
CompactSampleSet sample_annulus(std::size_t count, std::uint64_t seed, Sampling mode = Sampling::Random,
                                double inner = 0.5, double outer = 1.5);
// Axis-aligned box. Grid: `per_axis` points per axis including both ends.
CompactSampleSet sample_box_grid(const Vec& lo, const Vec& hi, std::size_t per_axis);
CompactSampleSet sample_box_random(const Vec& lo, const Vec& hi, std::size_t count, std::uint64_t seed);

Vec3 trefoil(double theta);
Vec3 trefoil_derivative(double theta);
Vec3 trefoil_second_derivative(double theta);
// Continuous unit normal along the trefoil (Frenet normal, with a projected
// reference vector where the curvature vanishes numerically).
Vec3 trefoil_normal(double theta);

inline constexpr double kDefaultRibbonHalfWidth = 0.1;

// f(theta) + a (r - 1) v(theta), 1/2 <= r <= 3/2.
Vec3 knotted_ribbon(double r, double theta, double a = kDefaultRibbonHalfWidth);

enum class DomainKind { Interval, Circle, Annulus, Box };

struct ManifoldTarget {
    std::string name;
    int intrinsic_dim = 0;
    int ambient_dim = 0;
    DomainKind domain = DomainKind::Box;
    bool closed = false;
    std::function<Vec(const Vec&)> map;

    Vec operator()(const Vec& x) const { return map(x); }
    Mat apply(const Mat& params) const;
};

// Planar circle of `radius` in R^3, in the plane spanned by e1 and
// (0, cos(tilt), sin(tilt)). Parameters are points of S^1 in R^2.
ManifoldTarget planar_circle_target(double radius = 2.0, double tilt = 0.5);
// Trefoil knot scaled by `scale`; parameters are points of S^1 in R^2.
ManifoldTarget trefoil_target(double scale = 1.0);
// Knotted ribbon over the annulus 1/2 <= |x| <= 3/2.
ManifoldTarget ribbon_target(double half_width = kDefaultRibbonHalfWidth);
// Smooth space curve t in [-1, 1] -> R^3 of diameter close to 1.
ManifoldTarget toy_curve_target();

// Samples of the target's parameter domain K: [-1, 1] for intervals, the unit
// circle, or the annulus 1/2 <= |x| <= 3/2. Boxes are not supported.
CompactSampleSet sample_domain(const ManifoldTarget& target, std::size_t count, std::uint64_t seed,
                               Sampling mode = Sampling::Random);

// Uniform-weight measure on {f(x) : x in base}.
EmpiricalMeasure pushforward_samples(const ManifoldTarget& target, const CompactSampleSet& base);

// Header x0..x{d-1}, one point per row, 17 significant digits.
void write_csv(std::ostream& out, const Mat& points, const std::string& prefix = "x");
void write_csv(const std::string& path, const Mat& points, const std::string& prefix = "x");
// Reads a CSV with a header row; returns a d x N matrix.
Mat read_csv(std::istream& in);
Mat read_csv(const std::string& path);

std::string format_double(double value);

} // namespace injflow::geometry
